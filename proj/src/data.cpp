#include "cpelab/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "cpelab/rng.hpp"

namespace cpelab::data {

void LabeledDataset::validate() const {
  if (features.rows < 1) throw std::invalid_argument("dataset: empty feature matrix");
  if (labels.size() != features.rows) {
    throw std::invalid_argument("dataset: labels length != feature rows");
  }
  if (num_classes < 2) throw std::invalid_argument("dataset: num_classes must be >= 2");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw std::invalid_argument("dataset: label out of range");
    }
  }
  if (has_counts()) {
    if (counts.rows != features.rows || counts.cols != num_classes) {
      throw std::invalid_argument("dataset: counts matrix shape mismatch");
    }
    for (std::size_t i = 0; i < counts.rows; ++i) {
      double row_sum = 0.0;
      for (std::size_t c = 0; c < counts.cols; ++c) {
        if (counts(i, c) < 0.0) throw std::invalid_argument("dataset: negative count");
        row_sum += counts(i, c);
      }
      if (row_sum < 1.0) throw std::invalid_argument("dataset: counts row sums to < 1");
    }
  }
}

void BudgetSchedule::validate() const {
  if (n < 1 || batch_size < 1 || epochs < 1 || cycle_epochs < 1) {
    throw std::invalid_argument("schedule: sizes must be positive");
  }
  if (batch_size > n) throw std::invalid_argument("schedule: batch_size > n");
  if (epochs <= burn_in_epochs) {
    throw std::invalid_argument("schedule: needs at least one post-burn-in cycle");
  }
  if ((epochs - burn_in_epochs) % cycle_epochs != 0) {
    throw std::invalid_argument("schedule: epochs - burn_in must be divisible by cycle");
  }
}

LabeledDataset gen_toy_gaussians(std::size_t n, std::uint64_t seed) {
  if (n < 2 || n % 2 != 0) {
    throw std::invalid_argument("gen_toy_gaussians: n must be even and >= 2");
  }
  auto gen = rng::make_rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  LabeledDataset ds;
  ds.features = Matrix(n, 2);
  ds.labels.resize(n);
  ds.num_classes = 2;
  ds.name = "toy_gaussians";
  for (std::size_t i = 0; i < n; ++i) {
    const int label = (i % 2 == 0) ? 0 : 1;
    const double center = label == 0 ? -1.0 : 1.0;
    ds.features(i, 0) = center + normal(gen);
    ds.features(i, 1) = center + normal(gen);
    ds.labels[i] = label;
  }
  return ds;
}

namespace {

std::uint32_t read_be32(std::ifstream& in, const std::string& path) {
  unsigned char buf[4];
  if (!in.read(reinterpret_cast<char*>(buf), 4)) {
    throw std::runtime_error("idx: truncated header in " + path);
  }
  return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
         (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

}  // namespace

LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw std::runtime_error("idx: cannot open " + images_path);
  const std::uint32_t img_magic = read_be32(img, images_path);
  if (img_magic != 0x00000803u) {
    throw std::runtime_error("idx: bad image magic in " + images_path);
  }
  const std::uint32_t n_images = read_be32(img, images_path);
  const std::uint32_t rows = read_be32(img, images_path);
  const std::uint32_t cols = read_be32(img, images_path);

  std::ifstream lbl(labels_path, std::ios::binary);
  if (!lbl) throw std::runtime_error("idx: cannot open " + labels_path);
  const std::uint32_t lbl_magic = read_be32(lbl, labels_path);
  if (lbl_magic != 0x00000801u) {
    throw std::runtime_error("idx: bad label magic in " + labels_path);
  }
  const std::uint32_t n_labels = read_be32(lbl, labels_path);
  if (n_images != n_labels) {
    throw std::runtime_error("idx: image/label count mismatch (" +
                             std::to_string(n_images) + " vs " +
                             std::to_string(n_labels) + ")");
  }

  const std::size_t pixels = std::size_t(rows) * cols;
  std::vector<unsigned char> raw(std::size_t(n_images) * pixels);
  if (!img.read(reinterpret_cast<char*>(raw.data()),
                static_cast<std::streamsize>(raw.size()))) {
    throw std::runtime_error("idx: truncated image payload in " + images_path);
  }
  std::vector<unsigned char> raw_labels(n_labels);
  if (!lbl.read(reinterpret_cast<char*>(raw_labels.data()),
                static_cast<std::streamsize>(raw_labels.size()))) {
    throw std::runtime_error("idx: truncated label payload in " + labels_path);
  }

  LabeledDataset ds;
  ds.features = Matrix(n_images, pixels);
  for (std::size_t i = 0; i < raw.size(); ++i) ds.features.data[i] = raw[i] / 255.0;
  ds.labels.resize(n_labels);
  for (std::size_t i = 0; i < raw_labels.size(); ++i) {
    ds.labels[i] = static_cast<int>(raw_labels[i]);
  }
  ds.num_classes = 10;
  ds.name = "idx";
  ds.validate();
  return ds;
}

LabeledDataset subsample(const LabeledDataset& dataset, std::size_t m, std::uint64_t seed) {
  const std::size_t n = dataset.size();
  if (m < 1 || m > n) {
    throw std::invalid_argument("subsample: m must be in [1, n]");
  }
  std::vector<std::size_t> indices(n);
  std::iota(indices.begin(), indices.end(), 0);
  auto gen = rng::make_rng(seed);
  // Partial Fisher-Yates: the first m entries are a uniform sample.
  for (std::size_t i = 0; i < m; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(indices[i], indices[pick(gen)]);
  }

  LabeledDataset out;
  out.features = Matrix(m, dataset.features.cols);
  out.labels.resize(m);
  out.num_classes = dataset.num_classes;
  out.name = dataset.name + "_sub" + std::to_string(m);
  if (dataset.has_counts()) out.counts = Matrix(m, dataset.counts.cols);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t src = indices[i];
    std::copy(dataset.features.row(src).begin(), dataset.features.row(src).end(),
              out.features.row(i).begin());
    out.labels[i] = dataset.labels[src];
    if (dataset.has_counts()) {
      std::copy(dataset.counts.row(src).begin(), dataset.counts.row(src).end(),
                out.counts.row(i).begin());
    }
  }
  return out;
}

BudgetSchedule schedule_for_budget(const BudgetSchedule& reference, std::size_t n_sub) {
  reference.validate();
  if (n_sub < 1) throw std::invalid_argument("schedule_for_budget: n_sub must be >= 1");
  if (n_sub == reference.n) return reference;

  BudgetSchedule sub = reference;
  sub.n = n_sub;
  sub.batch_size = std::min(reference.batch_size, n_sub);

  const std::size_t g_ref = reference.total_gradient_steps();
  const std::size_t steps_sub = sub.steps_per_epoch();
  if (g_ref % steps_sub != 0) {
    const std::size_t nearest = (g_ref + steps_sub / 2) / steps_sub;
    throw std::invalid_argument(
        "schedule_for_budget: budget " + std::to_string(g_ref) +
        " steps is not divisible by " + std::to_string(steps_sub) +
        " steps/epoch at n=" + std::to_string(n_sub) +
        " (nearest feasible epoch count: " + std::to_string(nearest) + ")");
  }
  sub.epochs = g_ref / steps_sub;

  // Burn-in and cycle stretch by the same epoch factor so K is unchanged.
  if ((sub.epochs * reference.cycle_epochs) % reference.epochs != 0 ||
      (sub.epochs * reference.burn_in_epochs) % reference.epochs != 0) {
    throw std::invalid_argument(
        "schedule_for_budget: burn-in/cycle cannot be scaled to whole epochs at n=" +
        std::to_string(n_sub));
  }
  sub.cycle_epochs = sub.epochs * reference.cycle_epochs / reference.epochs;
  sub.burn_in_epochs = sub.epochs * reference.burn_in_epochs / reference.epochs;
  sub.validate();
  if (sub.total_gradient_steps() != g_ref ||
      sub.samples_per_chain() != reference.samples_per_chain()) {
    throw std::logic_error("schedule_for_budget: budget invariant violated");
  }
  return sub;
}

void flip_horizontal(std::span<double> image, const ImageShape& shape) {
  for (std::size_t ch = 0; ch < shape.channels; ++ch) {
    double* plane = image.data() + ch * shape.height * shape.width;
    for (std::size_t r = 0; r < shape.height; ++r) {
      double* row = plane + r * shape.width;
      std::reverse(row, row + shape.width);
    }
  }
}

std::vector<double> pad_crop(std::span<const double> image, const ImageShape& shape,
                             std::size_t pad, std::size_t off_y, std::size_t off_x) {
  if (off_y > 2 * pad || off_x > 2 * pad) {
    throw std::invalid_argument("pad_crop: offset outside padded area");
  }
  std::vector<double> out(image.size(), 0.0);
  const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(off_y) - static_cast<std::ptrdiff_t>(pad);
  const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(off_x) - static_cast<std::ptrdiff_t>(pad);
  for (std::size_t ch = 0; ch < shape.channels; ++ch) {
    const double* src = image.data() + ch * shape.height * shape.width;
    double* dst = out.data() + ch * shape.height * shape.width;
    for (std::size_t r = 0; r < shape.height; ++r) {
      for (std::size_t c = 0; c < shape.width; ++c) {
        const std::ptrdiff_t sr = static_cast<std::ptrdiff_t>(r) + dy;
        const std::ptrdiff_t sc = static_cast<std::ptrdiff_t>(c) + dx;
        if (sr >= 0 && sr < static_cast<std::ptrdiff_t>(shape.height) && sc >= 0 &&
            sc < static_cast<std::ptrdiff_t>(shape.width)) {
          dst[r * shape.width + c] = src[sr * shape.width + sc];
        }
      }
    }
  }
  return out;
}

void adjust_contrast(std::span<double> image, const ImageShape& shape, double factor) {
  const std::size_t plane = shape.height * shape.width;
  for (std::size_t ch = 0; ch < shape.channels; ++ch) {
    double* p = image.data() + ch * plane;
    double mean = 0.0;
    for (std::size_t i = 0; i < plane; ++i) mean += p[i];
    mean /= static_cast<double>(plane);
    for (std::size_t i = 0; i < plane; ++i) p[i] = (p[i] - mean) * factor + mean;
  }
}

void adjust_brightness(std::span<double> image, const ImageShape& shape,
                       std::span<const double> per_channel_delta) {
  const std::size_t plane = shape.height * shape.width;
  for (std::size_t ch = 0; ch < shape.channels; ++ch) {
    double* p = image.data() + ch * plane;
    for (std::size_t i = 0; i < plane; ++i) p[i] += per_channel_delta[ch];
  }
}

void augment_batch(Matrix& batch, const ImageShape& shape, AugmentKind kind,
                   std::mt19937_64& rng) {
  if (shape.height != shape.width) {
    throw std::invalid_argument("augment_batch: images must be square");
  }
  if (shape.pixels() != batch.cols) {
    throw std::invalid_argument("augment_batch: feature width is not H*W*channels");
  }
  constexpr std::size_t kPad = 4;
  std::uniform_int_distribution<int> coin(0, 1);
  std::uniform_int_distribution<std::size_t> offset(0, 2 * kPad);
  std::uniform_real_distribution<double> contrast(0.45, 0.55);
  std::uniform_real_distribution<double> brightness(-0.15, 0.15);
  std::vector<double> deltas(shape.channels);

  for (std::size_t i = 0; i < batch.rows; ++i) {
    auto image = batch.row(i);
    if (kind == AugmentKind::flip_crop) {
      if (coin(rng) == 1) flip_horizontal(image, shape);
    } else {
      adjust_contrast(image, shape, contrast(rng));
      for (double& d : deltas) d = brightness(rng);
      adjust_brightness(image, shape, deltas);
    }
    const std::size_t off_y = offset(rng);
    const std::size_t off_x = offset(rng);
    const std::vector<double> cropped = pad_crop(image, shape, kPad, off_y, off_x);
    std::copy(cropped.begin(), cropped.end(), image.begin());
  }
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_double(const std::string& s, std::size_t line_no, const std::string& what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("csv: line " + std::to_string(line_no) + ": bad " + what +
                             " value '" + s + "'");
  }
}

}  // namespace

LabeledDataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("csv: cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("csv: empty file " + path);
  const auto header = split_fields(line);

  std::size_t p = 0;
  while (p < header.size() && header[p] == "x" + std::to_string(p)) ++p;
  if (p == 0 || p >= header.size() || header[p] != "label") {
    throw std::runtime_error("csv: line 1: header must be x0..x{p-1},label[,c0..]");
  }
  std::size_t count_cols = 0;
  for (std::size_t c = p + 1; c < header.size(); ++c) {
    if (header[c] != "c" + std::to_string(c - p - 1)) {
      throw std::runtime_error("csv: line 1: unexpected header column '" + header[c] + "'");
    }
    ++count_cols;
  }

  std::vector<double> features;
  std::vector<int> labels;
  std::vector<double> counts;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw std::runtime_error("csv: line " + std::to_string(line_no) + ": expected " +
                               std::to_string(header.size()) + " fields, got " +
                               std::to_string(fields.size()));
    }
    for (std::size_t c = 0; c < p; ++c) {
      features.push_back(parse_double(fields[c], line_no, "feature"));
    }
    const double label_val = parse_double(fields[p], line_no, "label");
    const int label = static_cast<int>(label_val);
    if (label < 0 || label != label_val) {
      throw std::runtime_error("csv: line " + std::to_string(line_no) +
                               ": label must be a nonnegative integer");
    }
    labels.push_back(label);
    for (std::size_t c = 0; c < count_cols; ++c) {
      const double v = parse_double(fields[p + 1 + c], line_no, "count");
      if (v < 0.0 || v != std::floor(v)) {
        throw std::runtime_error("csv: line " + std::to_string(line_no) +
                                 ": counts must be nonnegative integers");
      }
      counts.push_back(v);
    }
  }
  if (labels.empty()) throw std::runtime_error("csv: no data rows in " + path);

  LabeledDataset ds;
  const std::size_t n = labels.size();
  ds.features = Matrix(n, p);
  ds.features.data = std::move(features);
  ds.labels = std::move(labels);
  if (count_cols > 0) {
    ds.counts = Matrix(n, count_cols);
    ds.counts.data = std::move(counts);
    ds.num_classes = count_cols;
  } else {
    ds.num_classes = static_cast<std::size_t>(
                         *std::max_element(ds.labels.begin(), ds.labels.end())) + 1;
    ds.num_classes = std::max<std::size_t>(ds.num_classes, 2);
  }
  ds.name = path;
  ds.validate();
  return ds;
}

void save_csv(const LabeledDataset& dataset, const std::string& path) {
  dataset.validate();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("csv: cannot write " + path);
  const std::size_t p = dataset.features.cols;
  for (std::size_t c = 0; c < p; ++c) out << "x" << c << ",";
  out << "label";
  if (dataset.has_counts()) {
    for (std::size_t c = 0; c < dataset.num_classes; ++c) out << ",c" << c;
  }
  out << "\n";
  char buf[32];
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    for (std::size_t c = 0; c < p; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", dataset.features(i, c));
      out << buf << ",";
    }
    out << dataset.labels[i];
    if (dataset.has_counts()) {
      for (std::size_t c = 0; c < dataset.num_classes; ++c) {
        out << "," << static_cast<long long>(dataset.counts(i, c));
      }
    }
    out << "\n";
  }
  if (!out) throw std::runtime_error("csv: write failed for " + path);
}

}  // namespace cpelab::data
