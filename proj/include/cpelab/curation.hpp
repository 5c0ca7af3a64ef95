#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "cpelab/data.hpp"
#include "cpelab/nn.hpp"

namespace cpelab::curation {

/// Configuration of the synthetic curation pipeline: a probabilistic labeller
/// classifier trained on a held-out split, S i.i.d. simulated labellers, and
/// unanimous-consensus filtering.
struct CurationConfig {
  std::size_t num_labellers = 1;   // S
  double flatten_alpha = 1.0;      // probability flattening exponent, (0,1]; 1 = off
  double pretrain_fraction = 0.5;  // share of data used to train the labeller
  nn::MlpSpec labeller_arch;
  std::size_t labeller_epochs = 50;
  std::size_t labeller_batch = 32;
  double labeller_lr = 1e-3;
  double labeller_init_std = 1.0;
  std::uint64_t seed = 0;
  // Shared-uniform sampling draws one uniform stream per point so retention
  // is monotone in S; turn off for fully independent label draws.
  bool shared_uniforms = true;

  void validate() const;
};

enum class RelabelMode { consensus_label, original_label };

struct CurationResult {
  data::LabeledDataset curated;
  std::vector<std::uint8_t> retained_mask;  // over the input set
  double retention_rate = 0.0;
  double consensus_vs_original_agreement = 0.0;  // among retained points
};

/// Disjoint covering split into (pretrain, train); deterministic given seed.
std::pair<data::LabeledDataset, data::LabeledDataset> split_pretrain(
    const data::LabeledDataset& dataset, double fraction, std::uint64_t seed);

/// Adam-trained MLP classifier whose softmax defines the labelling
/// distribution. Zero epochs returns the prior-initialized parameters.
nn::ParamVector train_labeller(const data::LabeledDataset& pretrain,
                               const CurationConfig& config);

/// q_c = p_c^alpha / sum_j p_j^alpha; alpha = 1 is the identity. Preserves the
/// rank order of the entries.
std::vector<double> flatten_probs(std::span<const double> probs, double alpha);

/// Labelling distributions (softmax rows) of an MLP labeller for every row.
Matrix labeller_probs(const nn::MlpSpec& spec, const nn::ParamVector& params,
                      const Matrix& inputs);

/// Simulate S i.i.d. labellers per point from the given labelling
/// distributions (flattened by alpha) and keep a point iff all S agree.
/// Per-point RNG streams are derived from (seed, point index); with
/// shared_uniforms the first S draws are a prefix of the S'-draw stream for
/// any S' > S, making retention monotone non-increasing in S.
CurationResult curate_with_probs(const data::LabeledDataset& dataset,
                                 const Matrix& probs, std::size_t num_labellers,
                                 double alpha, std::uint64_t seed, RelabelMode mode,
                                 bool shared_uniforms = true);

/// Same, with the distributions coming from an MLP labeller.
CurationResult curate(const data::LabeledDataset& dataset, const nn::MlpSpec& labeller_spec,
                      const nn::ParamVector& labeller_params, std::size_t num_labellers,
                      double alpha, std::uint64_t seed, RelabelMode mode,
                      bool shared_uniforms = true);

/// Train-set curation plus the matching test treatment: when curate_test is
/// set the test set goes through the same S-labeller filter; otherwise it is
/// kept whole and re-labelled by a single draw from the labeller.
std::pair<CurationResult, CurationResult> curate_split(
    const data::LabeledDataset& train, const data::LabeledDataset& test,
    const nn::MlpSpec& labeller_spec, const nn::ParamVector& labeller_params,
    std::size_t num_labellers, double alpha, std::uint64_t seed, bool curate_test,
    RelabelMode mode = RelabelMode::consensus_label, bool shared_uniforms = true);

/// FNV-1a checksum of the labeller parameter bytes, for provenance sidecars.
std::uint64_t params_checksum(const nn::ParamVector& params);

}  // namespace cpelab::curation
