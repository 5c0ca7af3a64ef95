#include "cpelab/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

#include "cpelab/rng.hpp"

namespace cpelab::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// config parsing
// ---------------------------------------------------------------------------

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::toy_cpe: return "toy_cpe";
    case ExperimentKind::subsample: return "subsample";
    case ExperimentKind::curation_sweep: return "curation_sweep";
    case ExperimentKind::curate_and_subsample: return "curate_and_subsample";
    case ExperimentKind::counts_losses: return "counts_losses";
    case ExperimentKind::diagnostics: return "diagnostics";
  }
  return "unknown";
}

std::vector<double> default_temperature_grid() {
  // Six log-spaced points spanning [1e-3, 1]; endpoints pinned exactly.
  std::vector<double> grid(6);
  grid[0] = 0.001;
  for (int k = 1; k < 5; ++k) grid[k] = std::pow(10.0, -3.0 + 3.0 * k / 5.0);
  grid[5] = 1.0;
  return grid;
}

namespace {

ExperimentKind parse_kind(const std::string& s) {
  if (s == "toy_cpe") return ExperimentKind::toy_cpe;
  if (s == "subsample") return ExperimentKind::subsample;
  if (s == "curation_sweep") return ExperimentKind::curation_sweep;
  if (s == "curate_and_subsample") return ExperimentKind::curate_and_subsample;
  if (s == "counts_losses") return ExperimentKind::counts_losses;
  if (s == "diagnostics") return ExperimentKind::diagnostics;
  throw std::invalid_argument("config: unknown experiment kind '" + s + "'");
}

energy::LikelihoodKind parse_likelihood(const json& j) {
  const std::string kind = j.value("kind", "categorical");
  if (kind == "categorical") return energy::LikelihoodKind::categorical();
  if (kind == "counts") return energy::LikelihoodKind::counts();
  if (kind == "counts_smoothed") return energy::LikelihoodKind::counts_smoothed();
  if (kind == "label_smoothing") {
    return energy::LikelihoodKind::label_smoothing(j.value("alpha", 0.1));
  }
  throw std::invalid_argument("config: unknown likelihood kind '" + kind + "'");
}

std::string likelihood_tag(const energy::LikelihoodKind& kind) {
  switch (kind.variant) {
    case energy::LikelihoodKind::Variant::categorical: return "categorical";
    case energy::LikelihoodKind::Variant::counts: return "counts";
    case energy::LikelihoodKind::Variant::counts_smoothed: return "counts_smoothed";
    case energy::LikelihoodKind::Variant::label_smoothing: return "label_smoothing";
  }
  return "unknown";
}

template <typename T>
std::vector<T> parse_vector(const json& j, const char* field) {
  if (!j.is_array()) throw std::invalid_argument(std::string("config: ") + field + " must be an array");
  std::vector<T> out;
  for (const auto& v : j) out.push_back(v.get<T>());
  return out;
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
  }

  ExperimentConfig cfg;
  if (!j.contains("experiment")) throw std::invalid_argument("config: missing 'experiment'");
  cfg.kind = parse_kind(j.at("experiment").get<std::string>());
  cfg.output_dir = j.value("output_dir", "");
  cfg.master_seed = j.value("master_seed", std::uint64_t{0});
  if (j.contains("seeds")) cfg.seeds = parse_vector<std::int64_t>(j.at("seeds"), "seeds");
  cfg.temperatures = j.contains("temperatures")
                         ? parse_vector<double>(j.at("temperatures"), "temperatures")
                         : default_temperature_grid();
  cfg.workers = j.value("workers", std::size_t{0});

  if (j.contains("model")) {
    const json& m = j.at("model");
    if (m.contains("hidden")) cfg.model_hidden = parse_vector<std::size_t>(m.at("hidden"), "model.hidden");
    cfg.prior_std = m.value("prior_std", 1.0);
  }

  if (!j.contains("sampler")) throw std::invalid_argument("config: missing 'sampler'");
  {
    const json& s = j.at("sampler");
    const std::string kind = s.value("kind", "sgld");
    if (kind == "sgld") cfg.sampler.kind = samplers::SamplerKind::sgld;
    else if (kind == "sghmc") cfg.sampler.kind = samplers::SamplerKind::sghmc;
    else throw std::invalid_argument("config: sampler.kind must be sgld or sghmc");
    cfg.sampler.base_step = s.value("base_step", 0.1);
    cfg.sampler.batch_size = s.value("batch_size", std::size_t{0});
    cfg.sampler.burn_in_epochs = s.value("burn_in_epochs", std::size_t{0});
    cfg.sampler.cycle_epochs = s.value("cycle_epochs", std::size_t{1});
    cfg.sampler.total_epochs = s.value("total_epochs", std::size_t{1});
    cfg.sampler.momentum_weight = s.value("momentum_weight", 0.9);
    const std::string mode = s.value("temper_mode", "joint");
    if (mode == "joint") cfg.sampler.temper_mode = energy::TemperMode::joint;
    else if (mode == "likelihood_only") cfg.sampler.temper_mode = energy::TemperMode::likelihood_only;
    else throw std::invalid_argument("config: temper_mode must be joint or likelihood_only");
  }

  if (!j.contains("data")) throw std::invalid_argument("config: missing 'data'");
  {
    const json& d = j.at("data");
    const std::string source = d.value("source", "toy");
    if (source == "toy") {
      cfg.data.kind = DataSourceConfig::Kind::toy;
      if (d.contains("train_sizes")) {
        cfg.data.toy_train_sizes = parse_vector<std::size_t>(d.at("train_sizes"), "data.train_sizes");
      } else if (d.contains("n_train")) {
        cfg.data.toy_train_sizes = {d.at("n_train").get<std::size_t>()};
      }
      cfg.data.toy_test_size = d.value("n_test", std::size_t{2000});
    } else if (source == "idx") {
      cfg.data.kind = DataSourceConfig::Kind::idx;
      cfg.data.train_images = d.value("train_images", "");
      cfg.data.train_labels = d.value("train_labels", "");
      cfg.data.test_images = d.value("test_images", "");
      cfg.data.test_labels = d.value("test_labels", "");
    } else if (source == "csv") {
      cfg.data.kind = DataSourceConfig::Kind::csv;
      cfg.data.train_csv = d.value("train", "");
      cfg.data.test_csv = d.value("test", "");
    } else {
      throw std::invalid_argument("config: data.source must be toy, idx or csv");
    }
  }

  if (j.contains("subsample_sizes")) {
    cfg.subsample_sizes = parse_vector<std::size_t>(j.at("subsample_sizes"), "subsample_sizes");
  }
  if (j.contains("budget_reference")) {
    const json& b = j.at("budget_reference");
    cfg.budget.present = true;
    cfg.budget.n_ref = b.value("n_ref", std::size_t{0});
    cfg.budget.epochs = b.value("epochs", std::size_t{0});
    cfg.budget.cycle_epochs = b.value("cycle_epochs", std::size_t{0});
    cfg.budget.burn_in_epochs = b.value("burn_in_epochs", std::size_t{0});
    cfg.budget.batch_size = b.value("batch_size", std::size_t{0});
  }

  if (j.contains("curation")) {
    const json& c = j.at("curation");
    if (c.contains("labellers")) {
      cfg.curation.labeller_counts = parse_vector<std::size_t>(c.at("labellers"), "curation.labellers");
    } else if (c.contains("num_labellers")) {
      cfg.curation.labeller_counts = {c.at("num_labellers").get<std::size_t>()};
    }
    cfg.curation.flatten_alpha = c.value("flatten_alpha", 1.0);
    cfg.curation.pretrain_fraction = c.value("pretrain_fraction", 0.5);
    if (c.contains("labeller_hidden")) {
      cfg.curation.labeller_hidden = parse_vector<std::size_t>(c.at("labeller_hidden"), "curation.labeller_hidden");
    }
    cfg.curation.labeller_epochs = c.value("labeller_epochs", std::size_t{50});
    cfg.curation.labeller_batch = c.value("labeller_batch", std::size_t{32});
    cfg.curation.labeller_lr = c.value("labeller_lr", 1e-3);
    cfg.curation.curate_test = c.value("curate_test", true);
    const std::string relabel = c.value("relabel", "consensus");
    if (relabel == "consensus") cfg.curation.relabel = curation::RelabelMode::consensus_label;
    else if (relabel == "original") cfg.curation.relabel = curation::RelabelMode::original_label;
    else throw std::invalid_argument("config: curation.relabel must be consensus or original");
    cfg.curation.shared_uniforms = c.value("shared_uniforms", true);
    cfg.curation.save_curated = c.value("save_curated", false);
  }

  if (j.contains("likelihood")) cfg.likelihood = parse_likelihood(j.at("likelihood"));
  if (j.contains("losses")) {
    for (const auto& l : j.at("losses")) cfg.losses.push_back(parse_likelihood(l));
  }

  if (j.contains("augment")) {
    const json& a = j.at("augment");
    AugmentSettings aug;
    const std::string kind = a.value("kind", "flip_crop");
    if (kind == "flip_crop") aug.kind = data::AugmentKind::flip_crop;
    else if (kind == "brightness_contrast_crop") aug.kind = data::AugmentKind::brightness_contrast_crop;
    else throw std::invalid_argument("config: unknown augment kind '" + kind + "'");
    aug.shape.height = a.value("height", std::size_t{28});
    aug.shape.width = a.value("width", std::size_t{28});
    aug.shape.channels = a.value("channels", std::size_t{1});
    cfg.augment = aug;
  }

  if (j.contains("grid_export")) {
    const json& g = j.at("grid_export");
    cfg.grid_export.enabled = g.value("enabled", true);
    cfg.grid_export.resolution = g.value("resolution", std::size_t{101});
    if (g.contains("bounds")) {
      const auto b = parse_vector<double>(g.at("bounds"), "grid_export.bounds");
      if (b.size() != 4) throw std::invalid_argument("config: grid_export.bounds needs 4 values");
      cfg.grid_export.bounds = {b[0], b[1], b[2], b[3]};
    }
    if (g.contains("temperatures")) {
      cfg.grid_export.temperatures = parse_vector<double>(g.at("temperatures"), "grid_export.temperatures");
    }
  }

  cfg.canonical_json = j.dump();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void validate_config(const ExperimentConfig& cfg) {
  if (cfg.seeds.empty()) throw std::invalid_argument("config: seeds must be nonempty");
  if (cfg.temperatures.empty() ||
      std::find(cfg.temperatures.begin(), cfg.temperatures.end(), 1.0) ==
          cfg.temperatures.end()) {
    throw std::invalid_argument("config: temperature grid must contain 1.0");
  }
  for (double t : cfg.temperatures) {
    if (!(t > 0.0)) throw std::invalid_argument("config: temperatures must be > 0");
  }
  if (!(cfg.prior_std > 0.0)) throw std::invalid_argument("config: prior_std must be > 0");

  if (cfg.data.kind == DataSourceConfig::Kind::idx) {
    for (const std::string* p : {&cfg.data.train_images, &cfg.data.train_labels,
                                 &cfg.data.test_images, &cfg.data.test_labels}) {
      if (p->empty() || !fs::exists(*p)) {
        throw std::invalid_argument("config: idx file missing: " + (p->empty() ? "(unset)" : *p));
      }
    }
  } else if (cfg.data.kind == DataSourceConfig::Kind::csv) {
    for (const std::string* p : {&cfg.data.train_csv, &cfg.data.test_csv}) {
      if (p->empty() || !fs::exists(*p)) {
        throw std::invalid_argument("config: csv file missing: " + (p->empty() ? "(unset)" : *p));
      }
    }
  } else {
    if (cfg.data.toy_train_sizes.empty()) {
      throw std::invalid_argument("config: toy source needs train_sizes or n_train");
    }
    for (std::size_t n : cfg.data.toy_train_sizes) {
      if (n < 2 || n % 2 != 0) {
        throw std::invalid_argument("config: toy train sizes must be even and >= 2");
      }
    }
  }

  if (cfg.kind == ExperimentKind::toy_cpe && cfg.data.kind != DataSourceConfig::Kind::toy) {
    throw std::invalid_argument("config: toy_cpe requires data.source = toy");
  }
  if (cfg.kind == ExperimentKind::subsample || cfg.kind == ExperimentKind::curate_and_subsample) {
    if (cfg.subsample_sizes.empty()) {
      throw std::invalid_argument("config: subsample experiments need subsample_sizes");
    }
  }
  if (cfg.kind == ExperimentKind::counts_losses && cfg.losses.empty()) {
    throw std::invalid_argument("config: counts_losses needs a 'losses' list");
  }
  if (cfg.kind == ExperimentKind::diagnostics &&
      cfg.sampler.kind != samplers::SamplerKind::sghmc) {
    throw std::invalid_argument("config: diagnostics requires sampler.kind = sghmc");
  }

  // Schedule invariants for the non-budget-scaled path.
  if (cfg.sampler.total_epochs <= cfg.sampler.burn_in_epochs ||
      (cfg.sampler.total_epochs - cfg.sampler.burn_in_epochs) % cfg.sampler.cycle_epochs != 0) {
    throw std::invalid_argument(
        "config: sampler epochs must leave a whole number of post-burn-in cycles");
  }
}

std::string config_checksum(const ExperimentConfig& cfg) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(rng::fnv1a64(cfg.canonical_json)));
  return buf;
}

// ---------------------------------------------------------------------------
// manifest
// ---------------------------------------------------------------------------

RunManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("manifest: cannot open " + path);
  json j;
  in >> j;
  RunManifest m;
  m.config_checksum = j.value("config_checksum", "");
  m.kind = j.value("kind", "");
  m.output_dir = j.value("output_dir", "");
  m.chains_run = j.value("chains_run", std::size_t{0});
  m.chains_skipped = j.value("chains_skipped", std::size_t{0});
  m.chains_diverged = j.value("chains_diverged", std::size_t{0});
  m.wall_ms_total = j.value("wall_ms_total", 0.0);
  for (const auto& c : j.value("chains", json::array())) {
    ChainEntry e;
    e.id = c.value("id", "");
    e.group = c.value("group", "");
    e.n_train = c.value("n_train", std::size_t{0});
    e.seed = c.value("seed", std::int64_t{0});
    e.temperature = c.value("temperature", 1.0);
    e.status = c.value("status", "");
    e.gradient_steps = c.value("gradient_steps", std::uint64_t{0});
    e.ensemble_size = c.value("ensemble_size", std::size_t{0});
    e.wall_ms = c.value("wall_ms", 0.0);
    e.note = c.value("note", "");
    m.chains.push_back(std::move(e));
  }
  for (const auto& o : j.value("outputs", json::array())) {
    m.outputs.push_back(o.get<std::string>());
  }
  return m;
}

void save_manifest(const RunManifest& m, const std::string& path) {
  json j;
  j["config_checksum"] = m.config_checksum;
  j["kind"] = m.kind;
  j["output_dir"] = m.output_dir;
  j["chains_run"] = m.chains_run;
  j["chains_skipped"] = m.chains_skipped;
  j["chains_diverged"] = m.chains_diverged;
  j["wall_ms_total"] = m.wall_ms_total;
  j["chains"] = json::array();
  for (const ChainEntry& e : m.chains) {
    j["chains"].push_back({{"id", e.id},
                           {"group", e.group},
                           {"n_train", e.n_train},
                           {"seed", e.seed},
                           {"temperature", e.temperature},
                           {"status", e.status},
                           {"gradient_steps", e.gradient_steps},
                           {"ensemble_size", e.ensemble_size},
                           {"wall_ms", e.wall_ms},
                           {"note", e.note}});
  }
  j["outputs"] = m.outputs;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("manifest: cannot write " + path);
  out << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// job construction
// ---------------------------------------------------------------------------

namespace {

std::string format_temp(double t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", t);
  return buf;
}

struct Job {
  std::string id, group;
  std::size_t n_train = 0;
  std::int64_t seed_value = 0;
  double temperature = 1.0;
  std::shared_ptr<const data::LabeledDataset> train, test;
  nn::MlpSpec spec;
  energy::LikelihoodKind likelihood;
  energy::PriorConfig prior;
  samplers::SamplerConfig sampler;
  bool export_grid = false;
  bool skip = false;
};

struct RetentionRow {
  std::string group;
  std::size_t num_labellers = 0;
  std::int64_t seed = 0;
  std::size_t n_curated = 0;
  double retention = 0.0;
  double agreement = 0.0;
};

struct JobOutcome {
  ChainEntry entry;
  bool has_metrics = false;
  eval::MetricsRecord metrics;
  bool has_grid = false;
  eval::DecisionGrid grid;
  double boundary = std::nan("");
  double kinetic = std::nan("");
  std::vector<samplers::CycleRecord> log;
};

struct Prepared {
  std::vector<Job> jobs;
  std::vector<RetentionRow> retention;
};

samplers::SamplerConfig make_sampler(const SamplerTemplate& t, std::size_t n, double T,
                                     std::uint64_t chain_seed,
                                     const data::BudgetSchedule* sched) {
  samplers::SamplerConfig c;
  c.kind = t.kind;
  c.temperature = T;
  c.base_step = t.base_step;
  if (sched) {
    c.batch_size = sched->batch_size;
    c.burn_in_epochs = sched->burn_in_epochs;
    c.cycle_epochs = sched->cycle_epochs;
    c.total_epochs = sched->epochs;
  } else {
    c.batch_size = t.batch_size == 0 ? n : std::min(t.batch_size, n);
    c.burn_in_epochs = t.burn_in_epochs;
    c.cycle_epochs = t.cycle_epochs;
    c.total_epochs = t.total_epochs;
  }
  c.momentum_weight = t.momentum_weight;
  c.temper_mode = t.temper_mode;
  c.seed = chain_seed;
  return c;
}

bool grid_wants_temperature(const GridExportSettings& g, double t) {
  if (!g.enabled) return false;
  if (g.temperatures.empty()) return true;
  for (double want : g.temperatures) {
    if (std::abs(want - t) <= 1e-12 * std::max(1.0, std::abs(want))) return true;
  }
  return false;
}

nn::MlpSpec model_for(const ExperimentConfig& cfg, const data::LabeledDataset& train) {
  nn::MlpSpec spec;
  spec.input_dim = train.features.cols;
  spec.hidden_widths = cfg.model_hidden;
  spec.num_classes = train.num_classes;
  spec.validate();
  return spec;
}

// Expands one prepared (group, seed) pair into the temperature sweep.
void push_jobs(Prepared& out, const ExperimentConfig& cfg,
               const std::string& group, std::size_t n_train, std::int64_t seed_value,
               std::shared_ptr<const data::LabeledDataset> train,
               std::shared_ptr<const data::LabeledDataset> test,
               const energy::LikelihoodKind& likelihood,
               const data::BudgetSchedule* sched) {
  const nn::MlpSpec spec = model_for(cfg, *train);
  for (std::size_t ti = 0; ti < cfg.temperatures.size(); ++ti) {
    const double T = cfg.temperatures[ti];
    Job job;
    job.group = group;
    job.n_train = n_train;
    job.seed_value = seed_value;
    job.temperature = T;
    job.id = group + "_s" + std::to_string(seed_value) + "_T" + format_temp(T);
    job.train = train;
    job.test = test;
    job.spec = spec;
    job.likelihood = likelihood;
    job.prior.std = cfg.prior_std;
    const std::string chain_role =
        "chain|" + group + "|s" + std::to_string(seed_value);
    job.sampler = make_sampler(cfg.sampler, n_train, T,
                               rng::split_seed(cfg.master_seed, chain_role, ti), sched);
    job.export_grid = grid_wants_temperature(cfg.grid_export, T) &&
                      spec.input_dim == 2 && spec.num_classes == 2;
    out.jobs.push_back(std::move(job));
  }
}

struct LoadedSource {
  std::shared_ptr<const data::LabeledDataset> full_train;  // file sources / single toy
  std::shared_ptr<const data::LabeledDataset> test;
};

LoadedSource load_source(const ExperimentConfig& cfg) {
  LoadedSource src;
  switch (cfg.data.kind) {
    case DataSourceConfig::Kind::idx:
      src.full_train = std::make_shared<data::LabeledDataset>(
          data::load_idx(cfg.data.train_images, cfg.data.train_labels));
      src.test = std::make_shared<data::LabeledDataset>(
          data::load_idx(cfg.data.test_images, cfg.data.test_labels));
      break;
    case DataSourceConfig::Kind::csv:
      src.full_train =
          std::make_shared<data::LabeledDataset>(data::load_csv(cfg.data.train_csv));
      src.test = std::make_shared<data::LabeledDataset>(data::load_csv(cfg.data.test_csv));
      break;
    case DataSourceConfig::Kind::toy: {
      const std::size_t n_full = cfg.data.toy_train_sizes.front();
      src.full_train = std::make_shared<data::LabeledDataset>(data::gen_toy_gaussians(
          n_full, rng::split_seed(cfg.master_seed, "toy-full")));
      src.test = std::make_shared<data::LabeledDataset>(data::gen_toy_gaussians(
          cfg.data.toy_test_size, rng::split_seed(cfg.master_seed, "toy-test")));
      break;
    }
  }
  return src;
}

data::BudgetSchedule reference_schedule(const ExperimentConfig& cfg, std::size_t n_full) {
  data::BudgetSchedule ref;
  if (cfg.budget.present) {
    ref.n = cfg.budget.n_ref == 0 ? n_full : cfg.budget.n_ref;
    ref.batch_size = cfg.budget.batch_size;
    ref.epochs = cfg.budget.epochs;
    ref.cycle_epochs = cfg.budget.cycle_epochs;
    ref.burn_in_epochs = cfg.budget.burn_in_epochs;
  } else {
    ref.n = n_full;
    ref.batch_size = cfg.sampler.batch_size == 0 ? n_full : cfg.sampler.batch_size;
    ref.epochs = cfg.sampler.total_epochs;
    ref.cycle_epochs = cfg.sampler.cycle_epochs;
    ref.burn_in_epochs = cfg.sampler.burn_in_epochs;
  }
  ref.validate();
  return ref;
}

curation::CurationConfig curation_config(const ExperimentConfig& cfg,
                                         const data::LabeledDataset& train,
                                         std::int64_t seed_value) {
  curation::CurationConfig cc;
  cc.num_labellers = cfg.curation.labeller_counts.front();
  cc.flatten_alpha = cfg.curation.flatten_alpha;
  cc.pretrain_fraction = cfg.curation.pretrain_fraction;
  cc.labeller_arch.input_dim = train.features.cols;
  cc.labeller_arch.hidden_widths = cfg.curation.labeller_hidden;
  cc.labeller_arch.num_classes = train.num_classes;
  cc.labeller_epochs = cfg.curation.labeller_epochs;
  cc.labeller_batch = cfg.curation.labeller_batch;
  cc.labeller_lr = cfg.curation.labeller_lr;
  cc.seed = rng::split_seed(cfg.master_seed, "labeller",
                            static_cast<std::uint64_t>(seed_value));
  cc.shared_uniforms = cfg.curation.shared_uniforms;
  return cc;
}

/// Tally of S categorical draws per point from flattened labelling
/// distributions; the original labels are kept alongside the counts.
data::LabeledDataset make_counts_dataset(const data::LabeledDataset& base,
                                         const Matrix& probs, std::size_t S,
                                         double alpha, std::uint64_t seed) {
  data::LabeledDataset out = base;
  out.counts = Matrix(base.size(), base.num_classes);
  out.name = base.name + "_counts";
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  for (std::size_t i = 0; i < base.size(); ++i) {
    const std::vector<double> q = curation::flatten_probs(probs.row(i), alpha);
    auto gen = rng::make_rng(rng::split_seed(seed, "counts-point", i));
    for (std::size_t s = 0; s < S; ++s) {
      const double u = uniform(gen);
      double acc = 0.0;
      std::size_t label = base.num_classes - 1;
      for (std::size_t c = 0; c < base.num_classes; ++c) {
        acc += q[c];
        if (u < acc) {
          label = c;
          break;
        }
      }
      out.counts(i, label) += 1.0;
    }
  }
  return out;
}

Prepared prepare_jobs(const ExperimentConfig& cfg, const RunOptions& options,
                      const std::string& out_dir, std::vector<std::string>& outputs) {
  Prepared prep;
  std::vector<std::int64_t> seeds = cfg.seeds;
  for (std::int64_t& s : seeds) s += options.seed_offset;

  const LoadedSource src = load_source(cfg);

  switch (cfg.kind) {
    case ExperimentKind::toy_cpe: {
      for (std::size_t n : cfg.data.toy_train_sizes) {
        for (std::int64_t seed : seeds) {
          auto train = std::make_shared<data::LabeledDataset>(data::gen_toy_gaussians(
              n, rng::split_seed(cfg.master_seed, "toy-train|n" + std::to_string(n),
                                 static_cast<std::uint64_t>(seed))));
          push_jobs(prep, cfg, "toy_n" + std::to_string(n), n, seed, train, src.test,
                    cfg.likelihood, nullptr);
        }
      }
      break;
    }

    case ExperimentKind::subsample: {
      const data::BudgetSchedule ref = reference_schedule(cfg, src.full_train->size());
      for (std::size_t n : cfg.subsample_sizes) {
        const data::BudgetSchedule sched = data::schedule_for_budget(ref, n);
        for (std::int64_t seed : seeds) {
          auto train = std::make_shared<data::LabeledDataset>(data::subsample(
              *src.full_train, n,
              rng::split_seed(cfg.master_seed, "subsample|n" + std::to_string(n),
                              static_cast<std::uint64_t>(seed))));
          push_jobs(prep, cfg, "sub_n" + std::to_string(n), n, seed, train, src.test,
                    cfg.likelihood, &sched);
        }
      }
      break;
    }

    case ExperimentKind::curation_sweep: {
      for (std::int64_t seed : seeds) {
        auto [pre, tr] = curation::split_pretrain(
            *src.full_train, cfg.curation.pretrain_fraction,
            rng::split_seed(cfg.master_seed, "curation-split",
                            static_cast<std::uint64_t>(seed)));
        const curation::CurationConfig cc = curation_config(cfg, *src.full_train, seed);
        const nn::ParamVector labeller = curation::train_labeller(pre, cc);
        for (std::size_t S : cfg.curation.labeller_counts) {
          // one shared curation seed per replicate keeps retention monotone in S
          auto [train_cur, test_out] = curation::curate_split(
              tr, *src.test, cc.labeller_arch, labeller, S, cfg.curation.flatten_alpha,
              rng::split_seed(cfg.master_seed, "curate", static_cast<std::uint64_t>(seed)),
              cfg.curation.curate_test, cfg.curation.relabel, cfg.curation.shared_uniforms);
          const std::string group = "cur_S" + std::to_string(S);
          prep.retention.push_back({group, S, seed, train_cur.curated.size(),
                                    train_cur.retention_rate,
                                    train_cur.consensus_vs_original_agreement});
          if (train_cur.curated.size() < 2 || test_out.curated.size() < 1) {
            continue;  // fully filtered away; retention row still reported
          }
          if (cfg.curation.save_curated) {
            const std::string base = out_dir + "/curated_" + group + "_s" +
                                     std::to_string(seed);
            save_curated_with_provenance(train_cur, S, cfg.curation.flatten_alpha,
                                         curation::params_checksum(labeller), base);
            outputs.push_back(base + ".csv");
            outputs.push_back(base + ".provenance.json");
          }
          auto train = std::make_shared<data::LabeledDataset>(std::move(train_cur.curated));
          auto test = std::make_shared<data::LabeledDataset>(std::move(test_out.curated));
          push_jobs(prep, cfg, group, train->size(), seed, train, test, cfg.likelihood,
                    nullptr);
        }
      }
      break;
    }

    case ExperimentKind::curate_and_subsample: {
      const std::size_t S = cfg.curation.labeller_counts.front();
      for (std::int64_t seed : seeds) {
        auto [pre, tr] = curation::split_pretrain(
            *src.full_train, cfg.curation.pretrain_fraction,
            rng::split_seed(cfg.master_seed, "curation-split",
                            static_cast<std::uint64_t>(seed)));
        const curation::CurationConfig cc = curation_config(cfg, *src.full_train, seed);
        const nn::ParamVector labeller = curation::train_labeller(pre, cc);
        // original labels on the curated points (consensus only filters)
        curation::CurationResult cur = curation::curate(
            tr, cc.labeller_arch, labeller, S, cfg.curation.flatten_alpha,
            rng::split_seed(cfg.master_seed, "curate", static_cast<std::uint64_t>(seed)),
            curation::RelabelMode::original_label, cfg.curation.shared_uniforms);
        prep.retention.push_back({"cursub", S, seed, cur.curated.size(),
                                  cur.retention_rate,
                                  cur.consensus_vs_original_agreement});
        std::shared_ptr<const data::LabeledDataset> test = src.test;
        if (cfg.curation.curate_test) {
          curation::CurationResult test_cur = curation::curate(
              *src.test, cc.labeller_arch, labeller, S, cfg.curation.flatten_alpha,
              rng::split_seed(cfg.master_seed, "curate-test",
                              static_cast<std::uint64_t>(seed)),
              curation::RelabelMode::consensus_label, cfg.curation.shared_uniforms);
          if (test_cur.curated.size() < 1) {
            throw std::invalid_argument("curate_and_subsample: curated test set is empty");
          }
          test = std::make_shared<data::LabeledDataset>(std::move(test_cur.curated));
        }
        const data::BudgetSchedule ref = reference_schedule(cfg, src.full_train->size());
        for (std::size_t n : cfg.subsample_sizes) {
          if (cur.curated.size() < n) {
            throw std::invalid_argument(
                "curate_and_subsample: curated set has " +
                std::to_string(cur.curated.size()) + " points, need " + std::to_string(n) +
                " (use more labellers' worth of data or smaller sizes)");
          }
          auto train = std::make_shared<data::LabeledDataset>(data::subsample(
              cur.curated, n,
              rng::split_seed(cfg.master_seed, "cursub|n" + std::to_string(n),
                              static_cast<std::uint64_t>(seed))));
          const data::BudgetSchedule sched = data::schedule_for_budget(ref, n);
          push_jobs(prep, cfg, "cursub_n" + std::to_string(n), n, seed, train, test,
                    cfg.likelihood, &sched);
        }
      }
      break;
    }

    case ExperimentKind::counts_losses: {
      const std::size_t S = cfg.curation.labeller_counts.front();
      for (std::int64_t seed : seeds) {
        auto [pre, tr] = curation::split_pretrain(
            *src.full_train, cfg.curation.pretrain_fraction,
            rng::split_seed(cfg.master_seed, "curation-split",
                            static_cast<std::uint64_t>(seed)));
        const curation::CurationConfig cc = curation_config(cfg, *src.full_train, seed);
        const nn::ParamVector labeller = curation::train_labeller(pre, cc);
        const Matrix probs =
            curation::labeller_probs(cc.labeller_arch, labeller, tr.features);
        auto counts_ds = std::make_shared<data::LabeledDataset>(make_counts_dataset(
            tr, probs, S, cfg.curation.flatten_alpha,
            rng::split_seed(cfg.master_seed, "counts", static_cast<std::uint64_t>(seed))));
        for (const energy::LikelihoodKind& loss : cfg.losses) {
          push_jobs(prep, cfg, "loss_" + likelihood_tag(loss), counts_ds->size(), seed,
                    counts_ds, src.test, loss, nullptr);
        }
      }
      break;
    }

    case ExperimentKind::diagnostics: {
      const std::size_t n = src.full_train->size();
      for (std::int64_t seed : seeds) {
        push_jobs(prep, cfg, "diag", n, seed, src.full_train, src.test, cfg.likelihood,
                  nullptr);
      }
      break;
    }
  }
  return prep;
}

// ---------------------------------------------------------------------------
// execution
// ---------------------------------------------------------------------------

JobOutcome execute_job(const Job& job, const ExperimentConfig& cfg) {
  JobOutcome out;
  out.entry.id = job.id;
  out.entry.group = job.group;
  out.entry.n_train = job.n_train;
  out.entry.seed = job.seed_value;
  out.entry.temperature = job.temperature;

  samplers::BatchTransform transform;
  if (cfg.augment) {
    const AugmentSettings aug = *cfg.augment;
    transform = [aug](Matrix& batch, std::mt19937_64& rng) {
      data::augment_batch(batch, aug.shape, aug.kind, rng);
    };
  }

  const auto start = std::chrono::steady_clock::now();
  samplers::ChainResult chain;
  try {
    chain = samplers::run_chain(job.spec, *job.train, job.likelihood, job.prior,
                                job.sampler, transform);
  } catch (const std::exception& e) {
    out.entry.status = "failed";
    out.entry.note = e.what();
    return out;
  }
  out.entry.wall_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - start)
                          .count();
  out.entry.gradient_steps = chain.gradient_evals;
  out.log = std::move(chain.cycle_log);

  if (chain.diverged) {
    out.entry.status = "diverged";
    out.entry.note = chain.divergence_note;
    return out;
  }
  out.entry.status = "done";
  out.entry.ensemble_size = chain.ensemble.size();

  const Matrix probs =
      eval::posterior_predictive(job.spec, chain.ensemble, job.test->features);
  out.metrics.temperature = job.temperature;
  out.metrics.test_ce = eval::test_ce(probs, job.test->labels);
  out.metrics.accuracy = eval::accuracy(probs, job.test->labels);
  out.metrics.ece = eval::ece(probs, job.test->labels);
  out.metrics.n_train = job.n_train;
  out.metrics.seed = static_cast<std::uint64_t>(job.seed_value);
  out.metrics.ensemble_size = chain.ensemble.size();
  out.has_metrics = true;

  if (job.sampler.kind == samplers::SamplerKind::sghmc && !out.log.empty()) {
    // cycle-averaged m.m/d; the frozen collection-time statistic is available
    // via samplers::kinetic_temperature on the ensemble
    double acc = 0.0;
    for (const auto& rec : out.log) acc += rec.kinetic_temp;
    out.kinetic = acc / static_cast<double>(out.log.size());
  }
  if (job.export_grid) {
    out.grid = eval::decision_grid(job.spec, chain.ensemble, cfg.grid_export.bounds,
                                   cfg.grid_export.resolution);
    out.boundary = eval::boundary_agreement(out.grid);
    out.has_grid = true;
  }
  return out;
}

// ---------------------------------------------------------------------------
// outputs
// ---------------------------------------------------------------------------

std::string metrics_key(const std::string& group, std::int64_t seed, double T) {
  return group + "|" + std::to_string(seed) + "|" + format_temp(T);
}

struct MetricsRow {
  std::string group;
  eval::MetricsRecord record;
};

std::map<std::string, MetricsRow> load_metrics_csv(const std::string& path) {
  std::map<std::string, MetricsRow> rows;
  std::ifstream in(path);
  if (!in) return rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 8) continue;
    MetricsRow row;
    row.group = fields[0];
    row.record.n_train = std::stoull(fields[1]);
    const std::int64_t seed = std::stoll(fields[2]);
    row.record.seed = static_cast<std::uint64_t>(seed);
    row.record.temperature = std::stod(fields[3]);
    row.record.ensemble_size = std::stoull(fields[4]);
    row.record.test_ce = std::stod(fields[5]);
    row.record.accuracy = std::stod(fields[6]);
    row.record.ece = std::stod(fields[7]);
    rows[metrics_key(row.group, seed, row.record.temperature)] = std::move(row);
  }
  return rows;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "dataset,n,seed,T,K,ce,acc,ece\n";
  char buf[256];
  for (const MetricsRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%zu,%lld,%.12g,%zu,%.10g,%.10g,%.10g\n",
                  r.group.c_str(), r.record.n_train,
                  static_cast<long long>(r.record.seed), r.record.temperature,
                  r.record.ensemble_size, r.record.test_ce, r.record.accuracy,
                  r.record.ece);
    out << buf;
  }
}

struct TempStats {
  double ce_mean = 0.0, ce_stderr = 0.0, acc_mean = 0.0, ece_mean = 0.0;
  std::size_t count = 0;
};

std::map<double, TempStats> stats_by_temperature(
    const std::vector<eval::MetricsRecord>& records) {
  std::map<double, std::vector<const eval::MetricsRecord*>> groups;
  for (const auto& r : records) groups[r.temperature].push_back(&r);
  std::map<double, TempStats> stats;
  for (const auto& [t, recs] : groups) {
    TempStats s;
    s.count = recs.size();
    for (const auto* r : recs) {
      s.ce_mean += r->test_ce;
      s.acc_mean += r->accuracy;
      s.ece_mean += r->ece;
    }
    const double k = static_cast<double>(recs.size());
    s.ce_mean /= k;
    s.acc_mean /= k;
    s.ece_mean /= k;
    if (recs.size() > 1) {
      double var = 0.0;
      for (const auto* r : recs) {
        var += (r->test_ce - s.ce_mean) * (r->test_ce - s.ce_mean);
      }
      var /= (k - 1.0);
      s.ce_stderr = std::sqrt(var / k);
    }
    stats[t] = s;
  }
  return stats;
}

}  // namespace

void save_curated_with_provenance(const curation::CurationResult& result,
                                  std::size_t num_labellers, double alpha,
                                  std::uint64_t labeller_checksum,
                                  const std::string& base_path) {
  data::save_csv(result.curated, base_path + ".csv");
  json j;
  j["num_labellers"] = num_labellers;
  j["flatten_alpha"] = alpha;
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(labeller_checksum));
  j["labeller_checksum"] = buf;
  j["retention_rate"] = result.retention_rate;
  j["consensus_vs_original_agreement"] = result.consensus_vs_original_agreement;
  j["n_curated"] = result.curated.size();
  std::ofstream out(base_path + ".provenance.json");
  if (!out) throw std::runtime_error("cannot write " + base_path + ".provenance.json");
  out << j.dump(2) << "\n";
}

RunManifest run_experiment(const ExperimentConfig& cfg, const RunOptions& options) {
  validate_config(cfg);

  std::string out_dir = !options.out_override.empty() ? options.out_override
                                                      : cfg.output_dir;
  if (out_dir.empty()) {
    const char* env = std::getenv("CPELAB_OUT");
    out_dir = env ? env : "cpelab_out";
  }
  fs::create_directories(out_dir);
  fs::create_directories(out_dir + "/logs");
  if (cfg.grid_export.enabled) fs::create_directories(out_dir + "/grids");

  const std::string checksum = config_checksum(cfg);
  const std::string manifest_path = out_dir + "/manifest.json";
  const std::string metrics_path = out_dir + "/metrics.csv";

  // Resume support: completed chains of the same config are not rerun.
  std::map<std::string, ChainEntry> previous;
  std::map<std::string, MetricsRow> previous_metrics;
  if (fs::exists(manifest_path)) {
    try {
      const RunManifest prev = load_manifest(manifest_path);
      if (prev.config_checksum == checksum) {
        for (const ChainEntry& e : prev.chains) previous[e.id] = e;
        previous_metrics = load_metrics_csv(metrics_path);
      }
    } catch (const std::exception&) {
      // unreadable manifest: rerun everything
    }
  }

  RunManifest manifest;
  manifest.config_checksum = checksum;
  manifest.kind = to_string(cfg.kind);
  manifest.output_dir = out_dir;

  const auto run_start = std::chrono::steady_clock::now();
  Prepared prep = prepare_jobs(cfg, options, out_dir, manifest.outputs);

  std::vector<JobOutcome> outcomes(prep.jobs.size());
  std::vector<std::size_t> to_run;
  for (std::size_t i = 0; i < prep.jobs.size(); ++i) {
    Job& job = prep.jobs[i];
    const auto prev = previous.find(job.id);
    const auto prev_metrics =
        previous_metrics.find(metrics_key(job.group, job.seed_value, job.temperature));
    if (prev != previous.end() && prev->second.status == "done" &&
        prev_metrics != previous_metrics.end()) {
      job.skip = true;
      outcomes[i].entry = prev->second;
      outcomes[i].entry.status = "skipped";
      outcomes[i].metrics = prev_metrics->second.record;
      outcomes[i].has_metrics = true;
      ++manifest.chains_skipped;
    } else {
      to_run.push_back(i);
    }
  }

  std::size_t workers = options.workers != 0 ? options.workers
                        : cfg.workers != 0   ? cfg.workers
                                             : std::thread::hardware_concurrency();
  workers = std::max<std::size_t>(1, std::min(workers, to_run.size() ? to_run.size() : 1));

  std::atomic<std::size_t> cursor{0};
  std::mutex io_mutex;
  auto worker_fn = [&]() {
    while (true) {
      const std::size_t slot = cursor.fetch_add(1);
      if (slot >= to_run.size()) break;
      const std::size_t i = to_run[slot];
      outcomes[i] = execute_job(prep.jobs[i], cfg);
      if (!options.quiet) {
        std::lock_guard<std::mutex> lock(io_mutex);
        std::fprintf(stderr, "[cpelab] chain %s: %s (%.0f ms)\n",
                     outcomes[i].entry.id.c_str(), outcomes[i].entry.status.c_str(),
                     outcomes[i].entry.wall_ms);
      }
    }
  };
  {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker_fn);
    for (std::thread& t : pool) t.join();
  }

  // --- aggregate ---
  std::map<std::string, std::vector<eval::MetricsRecord>> by_group;
  std::map<std::string, std::size_t> group_n;
  std::vector<MetricsRow> metric_rows;
  std::vector<std::string> boundary_lines, diagnostics_lines;

  for (std::size_t i = 0; i < prep.jobs.size(); ++i) {
    const Job& job = prep.jobs[i];
    const JobOutcome& out = outcomes[i];
    manifest.chains.push_back(out.entry);
    if (out.entry.status == "done") ++manifest.chains_run;
    if (out.entry.status == "diverged" || out.entry.status == "failed") {
      ++manifest.chains_diverged;
    }
    if (out.has_metrics) {
      by_group[job.group].push_back(out.metrics);
      group_n.emplace(job.group, job.n_train);
      metric_rows.push_back({job.group, out.metrics});
    }
    if (!out.log.empty()) {
      const std::string log_path = out_dir + "/logs/chain_" + out.entry.id + ".log";
      std::ofstream log(log_path);
      for (const auto& rec : out.log) log << samplers::format_cycle_record(rec) << "\n";
      manifest.outputs.push_back(log_path);
    }
    if (out.has_grid) {
      const std::string grid_path = out_dir + "/grids/grid_" + out.entry.id + ".csv";
      std::ofstream g(grid_path);
      g << "x,y,prob1\n";
      char buf[96];
      for (std::size_t r = 0; r < out.grid.resolution; ++r) {
        for (std::size_t c = 0; c < out.grid.resolution; ++c) {
          std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%.10g\n", out.grid.x_at(c),
                        out.grid.y_at(r), out.grid.prob1[r * out.grid.resolution + c]);
          g << buf;
        }
      }
      manifest.outputs.push_back(grid_path);
      char line[160];
      std::snprintf(line, sizeof(line), "%s,%zu,%lld,%.12g,%.10g", job.group.c_str(),
                    job.n_train, static_cast<long long>(job.seed_value),
                    job.temperature, out.boundary);
      boundary_lines.emplace_back(line);
    }
    if (cfg.kind == ExperimentKind::diagnostics && std::isfinite(out.kinetic)) {
      char line[160];
      std::snprintf(line, sizeof(line), "%s,%zu,%lld,%.12g,%.10g,%.10g",
                    job.group.c_str(), job.n_train,
                    static_cast<long long>(job.seed_value), job.temperature,
                    out.kinetic, out.kinetic / job.temperature);
      diagnostics_lines.emplace_back(line);
    }
  }

  if (cfg.kind == ExperimentKind::subsample ||
      cfg.kind == ExperimentKind::curate_and_subsample) {
    // the fixed-budget contract, surfaced end to end
    std::uint64_t budget = 0;
    for (const ChainEntry& e : manifest.chains) {
      if (e.status != "done" && e.status != "skipped") continue;
      if (budget == 0) budget = e.gradient_steps;
      if (e.gradient_steps != budget) {
        throw std::logic_error("run_experiment: gradient budget differs across chains");
      }
    }
  }

  std::sort(metric_rows.begin(), metric_rows.end(), [](const auto& a, const auto& b) {
    if (a.group != b.group) return a.group < b.group;
    if (a.record.seed != b.record.seed) return a.record.seed < b.record.seed;
    return a.record.temperature < b.record.temperature;
  });
  write_metrics_csv(metrics_path, metric_rows);
  manifest.outputs.push_back(metrics_path);

  for (const auto& [group, records] : by_group) {
    json sweep;
    sweep["group"] = group;
    sweep["n"] = group_n[group];
    try {
      eval::SweepResult result;
      result.records = records;
      result.cper = eval::cper(result.records);
      sweep["cper"] = result.cper;
      sweep["cper_per_seed_mean"] = eval::cper_per_seed_mean(result.records);
    } catch (const std::exception& e) {
      sweep["cper"] = nullptr;
      sweep["note"] = e.what();
    }
    const auto stats = stats_by_temperature(records);
    double t_star = 1.0;
    double best = std::numeric_limits<double>::infinity();
    sweep["per_temperature"] = json::array();
    for (const auto& [t, s] : stats) {
      if (s.ce_mean < best) {
        best = s.ce_mean;
        t_star = t;
      }
      sweep["per_temperature"].push_back({{"T", t},
                                          {"ce_mean", s.ce_mean},
                                          {"ce_stderr", s.ce_stderr},
                                          {"acc_mean", s.acc_mean},
                                          {"ece_mean", s.ece_mean},
                                          {"num_seeds", s.count}});
    }
    sweep["t_star"] = t_star;
    const std::string sweep_path = out_dir + "/sweep_" + group + ".json";
    std::ofstream out(sweep_path);
    out << sweep.dump(2) << "\n";
    manifest.outputs.push_back(sweep_path);
  }

  if (!boundary_lines.empty()) {
    const std::string path = out_dir + "/boundary.csv";
    std::ofstream out(path);
    out << "dataset,n,seed,T,agreement\n";
    for (const std::string& l : boundary_lines) out << l << "\n";
    manifest.outputs.push_back(path);
  }
  if (!diagnostics_lines.empty()) {
    const std::string path = out_dir + "/diagnostics.csv";
    std::ofstream out(path);
    out << "dataset,n,seed,T,kinetic_temp,ratio\n";
    for (const std::string& l : diagnostics_lines) out << l << "\n";
    manifest.outputs.push_back(path);
  }
  if (!prep.retention.empty()) {
    const std::string path = out_dir + "/retention.csv";
    std::ofstream out(path);
    out << "dataset,S,seed,n_curated,retention_rate,agreement\n";
    char buf[200];
    for (const RetentionRow& r : prep.retention) {
      std::snprintf(buf, sizeof(buf), "%s,%zu,%lld,%zu,%.10g,%.10g\n", r.group.c_str(),
                    r.num_labellers, static_cast<long long>(r.seed), r.n_curated,
                    r.retention, r.agreement);
      out << buf;
    }
    manifest.outputs.push_back(path);
  }

  manifest.wall_ms_total = std::chrono::duration<double, std::milli>(
                               std::chrono::steady_clock::now() - run_start)
                               .count();
  save_manifest(manifest, manifest_path);
  return manifest;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

namespace {

bool manifest_has_output(const RunManifest& m, const std::string& suffix) {
  for (const std::string& o : m.outputs) {
    if (o.size() >= suffix.size() &&
        o.compare(o.size() - suffix.size(), suffix.size(), suffix) == 0) {
      return true;
    }
  }
  return false;
}

}  // namespace

std::string emit_report(const RunManifest& manifest) {
  if (manifest.chains.empty()) {
    throw std::invalid_argument("emit_report: manifest has no chains");
  }
  std::ostringstream out;
  char buf[256];
  out << "cpelab report\n";
  out << "=============\n";
  std::snprintf(buf, sizeof(buf),
                "experiment: %s  checksum: %s\nchains: %zu run, %zu skipped, %zu diverged\n",
                manifest.kind.c_str(), manifest.config_checksum.c_str(),
                manifest.chains_run, manifest.chains_skipped, manifest.chains_diverged);
  out << buf;

  if (manifest_has_output(manifest, "metrics.csv")) {
    const auto rows = load_metrics_csv(manifest.output_dir + "/metrics.csv");
    std::map<std::string, std::vector<eval::MetricsRecord>> by_group;
    std::map<std::string, std::size_t> group_n;
    for (const auto& [key, row] : rows) {
      by_group[row.group].push_back(row.record);
      group_n.emplace(row.group, row.record.n_train);
    }

    out << "\nCPER by group\n";
    out << "group                 n        CPER      CPER(per-seed)  T*\n";
    for (const auto& [group, records] : by_group) {
      double ratio = std::nan(""), per_seed = std::nan(""), t_star = std::nan("");
      try {
        ratio = eval::cper(records);
        per_seed = eval::cper_per_seed_mean(records);
        const auto stats = stats_by_temperature(records);
        double best = std::numeric_limits<double>::infinity();
        for (const auto& [t, s] : stats) {
          if (s.ce_mean < best) {
            best = s.ce_mean;
            t_star = t;
          }
        }
      } catch (const std::exception&) {
      }
      std::snprintf(buf, sizeof(buf), "%-20s  %-7zu  %-8.4f  %-14.4f  %g\n",
                    group.c_str(), group_n[group], ratio, per_seed, t_star);
      out << buf;
    }

    for (const auto& [group, records] : by_group) {
      std::snprintf(buf, sizeof(buf), "\nTest CE by temperature: %s (n=%zu)\n",
                    group.c_str(), group_n[group]);
      out << buf;
      out << "T            ce_mean      ce_stderr    acc_mean   ece_mean   seeds\n";
      for (const auto& [t, s] : stats_by_temperature(records)) {
        std::snprintf(buf, sizeof(buf), "%-11.5g  %-11.5g  %-11.3g  %-9.4f  %-9.4f  %zu\n",
                      t, s.ce_mean, s.ce_stderr, s.acc_mean, s.ece_mean, s.count);
        out << buf;
      }
    }
  }

  if (manifest_has_output(manifest, "retention.csv")) {
    std::ifstream in(manifest.output_dir + "/retention.csv");
    if (in) {
      out << "\nCuration retention\n";
      std::string line;
      while (std::getline(in, line)) out << line << "\n";
    }
  }
  if (manifest_has_output(manifest, "diagnostics.csv")) {
    std::ifstream in(manifest.output_dir + "/diagnostics.csv");
    if (in) {
      out << "\nKinetic-temperature diagnostics\n";
      std::string line;
      while (std::getline(in, line)) out << line << "\n";
    }
  }
  return out.str();
}

}  // namespace cpelab::experiment
