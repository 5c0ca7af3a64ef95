#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cpelab/curation.hpp"
#include "cpelab/data.hpp"
#include "cpelab/energy.hpp"
#include "cpelab/eval.hpp"
#include "cpelab/samplers.hpp"

namespace cpelab::experiment {

enum class ExperimentKind {
  toy_cpe,
  subsample,
  curation_sweep,
  curate_and_subsample,
  counts_losses,
  diagnostics,
};

std::string to_string(ExperimentKind kind);

struct DataSourceConfig {
  enum class Kind { toy, idx, csv };
  Kind kind = Kind::toy;
  std::vector<std::size_t> toy_train_sizes{32};
  std::size_t toy_test_size = 2000;
  std::string train_images, train_labels, test_images, test_labels;
  std::string train_csv, test_csv;
};

struct SamplerTemplate {
  samplers::SamplerKind kind = samplers::SamplerKind::sgld;
  double base_step = 0.1;
  std::size_t batch_size = 0;  // 0 = full batch
  std::size_t burn_in_epochs = 0;
  std::size_t cycle_epochs = 1;
  std::size_t total_epochs = 1;
  double momentum_weight = 0.9;
  energy::TemperMode temper_mode = energy::TemperMode::joint;
};

struct BudgetReference {
  bool present = false;
  std::size_t n_ref = 0, epochs = 0, cycle_epochs = 0, burn_in_epochs = 0, batch_size = 0;
};

struct CurationSettings {
  std::vector<std::size_t> labeller_counts{1};  // S values to sweep
  double flatten_alpha = 1.0;
  double pretrain_fraction = 0.5;
  std::vector<std::size_t> labeller_hidden{32};
  std::size_t labeller_epochs = 50;
  std::size_t labeller_batch = 32;
  double labeller_lr = 1e-3;
  bool curate_test = true;
  curation::RelabelMode relabel = curation::RelabelMode::consensus_label;
  bool shared_uniforms = true;
  bool save_curated = false;
};

struct AugmentSettings {
  data::AugmentKind kind = data::AugmentKind::flip_crop;
  data::ImageShape shape;
};

struct GridExportSettings {
  bool enabled = false;
  std::size_t resolution = 101;
  eval::GridBounds bounds;
  std::vector<double> temperatures;  // empty = all
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::toy_cpe;
  std::string output_dir;
  std::uint64_t master_seed = 0;
  std::vector<std::int64_t> seeds;
  std::vector<double> temperatures;  // must contain 1.0
  std::size_t workers = 0;           // 0 = auto
  std::vector<std::size_t> model_hidden{20};
  double prior_std = 1.0;
  SamplerTemplate sampler;
  DataSourceConfig data;
  std::vector<std::size_t> subsample_sizes;
  BudgetReference budget;
  CurationSettings curation;
  energy::LikelihoodKind likelihood = energy::LikelihoodKind::categorical();
  std::vector<energy::LikelihoodKind> losses;  // counts_losses sweep
  std::optional<AugmentSettings> augment;
  GridExportSettings grid_export;
  std::string canonical_json;  // normalized source text, checksummed for provenance
};

/// Six log-spaced temperatures from 1e-3 to 1.
std::vector<double> default_temperature_grid();

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);

/// Structural validation beyond parsing: grid contains 1.0, seeds nonempty,
/// referenced files exist, sampler/schedule invariants hold.
void validate_config(const ExperimentConfig& config);

std::string config_checksum(const ExperimentConfig& config);

struct ChainEntry {
  std::string id;
  std::string group;
  std::size_t n_train = 0;
  std::int64_t seed = 0;
  double temperature = 1.0;
  std::string status;  // done | diverged | skipped
  std::uint64_t gradient_steps = 0;
  std::size_t ensemble_size = 0;
  double wall_ms = 0.0;
  std::string note;
};

struct RunManifest {
  std::string config_checksum;
  std::string kind;
  std::string output_dir;
  std::vector<ChainEntry> chains;
  std::vector<std::string> outputs;
  std::size_t chains_run = 0, chains_skipped = 0, chains_diverged = 0;
  double wall_ms_total = 0.0;

  bool all_ok() const { return chains_diverged == 0; }
};

struct RunOptions {
  std::size_t workers = 0;     // 0 = config value or auto
  std::string out_override;    // overrides config.output_dir
  std::int64_t seed_offset = 0;
  bool quiet = false;
};

/// Execute every (group, seed, temperature) chain of the experiment, evaluate
/// the posterior predictive on the test set, and write metrics.csv, per-group
/// sweep_*.json, optional grids/boundary/diagnostics/retention CSVs, chain
/// logs, and manifest.json under the output directory. Completed chains found
/// in an existing manifest with a matching config checksum are skipped.
RunManifest run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

RunManifest load_manifest(const std::string& path);
void save_manifest(const RunManifest& manifest, const std::string& path);

/// Human-readable summary (CPER per group, CE-vs-T tables, retention and
/// diagnostics tables when present). Throws on an empty manifest.
std::string emit_report(const RunManifest& manifest);

/// Serialize a curated dataset next to a provenance sidecar
/// (<base>.csv + <base>.provenance.json).
void save_curated_with_provenance(const curation::CurationResult& result,
                                  std::size_t num_labellers, double alpha,
                                  std::uint64_t labeller_checksum,
                                  const std::string& base_path);

}  // namespace cpelab::experiment
