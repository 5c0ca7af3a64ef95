#include "cpelab/curation.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>

#include "cpelab/kernels.hpp"
#include "cpelab/rng.hpp"
#include "cpelab/samplers.hpp"

namespace cpelab::curation {

void CurationConfig::validate() const {
  if (num_labellers < 1) throw std::invalid_argument("curation: S must be >= 1");
  if (!(flatten_alpha > 0.0 && flatten_alpha <= 1.0)) {
    throw std::invalid_argument("curation: flatten_alpha must be in (0,1]");
  }
  if (!(pretrain_fraction > 0.0 && pretrain_fraction < 1.0)) {
    throw std::invalid_argument("curation: pretrain_fraction must be in (0,1)");
  }
  labeller_arch.validate();
  if (!(labeller_lr > 0.0)) throw std::invalid_argument("curation: labeller_lr must be > 0");
  if (labeller_batch < 1) throw std::invalid_argument("curation: labeller_batch must be >= 1");
}

namespace {

data::LabeledDataset take_rows(const data::LabeledDataset& src,
                               std::span<const std::size_t> rows, const std::string& name) {
  data::LabeledDataset out;
  out.features = Matrix(rows.size(), src.features.cols);
  out.labels.resize(rows.size());
  out.num_classes = src.num_classes;
  out.name = name;
  if (src.has_counts()) out.counts = Matrix(rows.size(), src.counts.cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(src.features.row(rows[i]).begin(), src.features.row(rows[i]).end(),
              out.features.row(i).begin());
    out.labels[i] = src.labels[rows[i]];
    if (src.has_counts()) {
      std::copy(src.counts.row(rows[i]).begin(), src.counts.row(rows[i]).end(),
                out.counts.row(i).begin());
    }
  }
  return out;
}

}  // namespace

std::pair<data::LabeledDataset, data::LabeledDataset> split_pretrain(
    const data::LabeledDataset& dataset, double fraction, std::uint64_t seed) {
  dataset.validate();
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw std::invalid_argument("split_pretrain: fraction must be in (0,1)");
  }
  const std::size_t n = dataset.size();
  const std::size_t n_pre = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(n)));
  if (n_pre == 0 || n_pre == n) {
    throw std::invalid_argument("split_pretrain: split leaves one side empty");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto gen = rng::make_rng(rng::split_seed(seed, "pretrain-split"));
  std::shuffle(order.begin(), order.end(), gen);
  const std::span<const std::size_t> pre(order.data(), n_pre);
  const std::span<const std::size_t> tr(order.data() + n_pre, n - n_pre);
  return {take_rows(dataset, pre, dataset.name + "_pre"),
          take_rows(dataset, tr, dataset.name + "_tr")};
}

nn::ParamVector train_labeller(const data::LabeledDataset& pretrain,
                               const CurationConfig& config) {
  config.validate();
  pretrain.validate();
  if (pretrain.features.cols != config.labeller_arch.input_dim ||
      pretrain.num_classes != config.labeller_arch.num_classes) {
    throw std::invalid_argument("train_labeller: labeller architecture mismatch");
  }

  nn::ParamVector params = nn::init_params(
      config.labeller_arch, config.labeller_init_std,
      rng::split_seed(config.seed, "labeller-init"));
  if (config.labeller_epochs == 0) return params;

  const std::size_t n = pretrain.size();
  const std::size_t batch = std::min(config.labeller_batch, n);
  std::vector<double> m1(params.size(), 0.0), m2(params.size(), 0.0);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto shuffle_rng = rng::make_rng(rng::split_seed(config.seed, "labeller-shuffle"));

  Matrix batch_x;
  std::vector<int> batch_y;
  nn::GradVector loss_grad(params.size());
  std::uint64_t t = 0;
  for (std::size_t epoch = 0; epoch < config.labeller_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t b = std::min(batch, n - start);
      batch_x = Matrix(b, pretrain.features.cols);
      batch_y.resize(b);
      for (std::size_t i = 0; i < b; ++i) {
        const std::size_t idx = order[start + i];
        std::copy(pretrain.features.row(idx).begin(), pretrain.features.row(idx).end(),
                  batch_x.row(i).begin());
        batch_y[i] = pretrain.labels[idx];
      }
      const nn::LogLikResult res = nn::grad_loglik(config.labeller_arch, params,
                                                   batch_x, batch_y);
      // minimize mean cross-entropy = -loglik/b
      loss_grad.assign(res.grad.begin(), res.grad.end());
      kernels::scale(-1.0 / static_cast<double>(b), loss_grad.data(), loss_grad.size());
      samplers::adam_step(params, loss_grad, m1, m2, ++t, config.labeller_lr);
      for (double v : params) {
        if (!std::isfinite(v)) {
          throw std::runtime_error("train_labeller: diverged (non-finite parameters)");
        }
      }
    }
  }
  return params;
}

std::vector<double> flatten_probs(std::span<const double> probs, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("flatten_probs: alpha must be in (0,1]");
  }
  std::vector<double> out(probs.begin(), probs.end());
  if (alpha == 1.0) return out;
  double sum = 0.0;
  for (double& q : out) {
    if (q < 0.0) throw std::invalid_argument("flatten_probs: negative probability");
    q = q > 0.0 ? std::pow(q, alpha) : 0.0;
    sum += q;
  }
  if (!(sum > 0.0)) throw std::invalid_argument("flatten_probs: zero-sum vector");
  for (double& q : out) q /= sum;
  return out;
}

Matrix labeller_probs(const nn::MlpSpec& spec, const nn::ParamVector& params,
                      const Matrix& inputs) {
  return nn::softmax(nn::forward(spec, params, inputs));
}

namespace {

int sample_from_cdf(std::span<const double> probs, double u) {
  double acc = 0.0;
  for (std::size_t c = 0; c < probs.size(); ++c) {
    acc += probs[c];
    if (u < acc) return static_cast<int>(c);
  }
  return static_cast<int>(probs.size()) - 1;
}

}  // namespace

CurationResult curate_with_probs(const data::LabeledDataset& dataset,
                                 const Matrix& probs, std::size_t num_labellers,
                                 double alpha, std::uint64_t seed, RelabelMode mode,
                                 bool shared_uniforms) {
  dataset.validate();
  if (num_labellers < 1) throw std::invalid_argument("curate: S must be >= 1");
  if (probs.rows != dataset.size() || probs.cols != dataset.num_classes) {
    throw std::invalid_argument("curate: probability matrix shape mismatch");
  }

  const std::size_t n = dataset.size();
  CurationResult result;
  result.retained_mask.assign(n, 0);

  std::vector<std::size_t> kept;
  std::vector<int> consensus(n, -1);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::size_t agree = 0;

  // The stream role includes S in independent mode so different sweep points
  // are decorrelated; in shared mode the S labels are a prefix of any longer
  // stream for the same point.
  const std::string role = shared_uniforms
                               ? "curate-point"
                               : "curate-point-S" + std::to_string(num_labellers);
  for (std::size_t i = 0; i < n; ++i) {
    const std::vector<double> q = flatten_probs(probs.row(i), alpha);
    auto gen = rng::make_rng(rng::split_seed(seed, role, i));
    const int first = sample_from_cdf(q, uniform(gen));
    bool unanimous = true;
    for (std::size_t s = 1; s < num_labellers; ++s) {
      const int label = sample_from_cdf(q, uniform(gen));
      if (label != first) {
        unanimous = false;
        if (!shared_uniforms) break;  // shared mode keeps the draw count fixed
      }
    }
    if (unanimous) {
      result.retained_mask[i] = 1;
      consensus[i] = first;
      kept.push_back(i);
      if (first == dataset.labels[i]) ++agree;
    }
  }

  result.retention_rate = static_cast<double>(kept.size()) / static_cast<double>(n);
  result.consensus_vs_original_agreement =
      kept.empty() ? 0.0 : static_cast<double>(agree) / static_cast<double>(kept.size());

  if (kept.empty()) {
    result.curated.num_classes = dataset.num_classes;
    result.curated.name = dataset.name + "_cur";
    return result;
  }
  result.curated = take_rows(dataset, kept, dataset.name + "_cur");
  result.curated.counts = Matrix();  // consensus labels replace any raw tallies
  if (mode == RelabelMode::consensus_label) {
    for (std::size_t i = 0; i < kept.size(); ++i) {
      result.curated.labels[i] = consensus[kept[i]];
    }
  }
  return result;
}

CurationResult curate(const data::LabeledDataset& dataset, const nn::MlpSpec& labeller_spec,
                      const nn::ParamVector& labeller_params, std::size_t num_labellers,
                      double alpha, std::uint64_t seed, RelabelMode mode,
                      bool shared_uniforms) {
  const Matrix probs = labeller_probs(labeller_spec, labeller_params, dataset.features);
  return curate_with_probs(dataset, probs, num_labellers, alpha, seed, mode,
                           shared_uniforms);
}

std::pair<CurationResult, CurationResult> curate_split(
    const data::LabeledDataset& train, const data::LabeledDataset& test,
    const nn::MlpSpec& labeller_spec, const nn::ParamVector& labeller_params,
    std::size_t num_labellers, double alpha, std::uint64_t seed, bool curate_test,
    RelabelMode mode, bool shared_uniforms) {
  CurationResult train_cur = curate(train, labeller_spec, labeller_params,
                                    num_labellers, alpha,
                                    rng::split_seed(seed, "curate-train"), mode,
                                    shared_uniforms);
  // Un-curated test sets are re-labelled by a single labeller draw (S=1
  // retains everything). The test side always takes the sampled labels; the
  // `mode` switch concerns the train set only.
  const std::size_t test_s = curate_test ? num_labellers : 1;
  CurationResult test_out = curate(test, labeller_spec, labeller_params, test_s, alpha,
                                   rng::split_seed(seed, "curate-test"),
                                   RelabelMode::consensus_label, shared_uniforms);
  return {std::move(train_cur), std::move(test_out)};
}

std::uint64_t params_checksum(const nn::ParamVector& params) {
  std::uint64_t h = 14695981039346656037ull;
  for (double v : params) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 1099511628211ull;
    }
  }
  return h;
}

}  // namespace cpelab::curation
