#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "grft/data.hpp"
#include "grft/losses.hpp"
#include "grft/masking.hpp"
#include "grft/model.hpp"
#include "grft/optim.hpp"

namespace grft {

struct PretrainConfig {
  std::vector<std::size_t> dims;  // input, hidden..., classes
  std::size_t epochs = 50;
  OptimConfig optim;              // total_epochs is taken from `epochs`
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

// Full (unmasked) Adam on source cross entropy. epochs = 0 returns the
// initialization untouched.
ModelParams pretrain(const TaskPair& task, const PretrainConfig& cfg);

struct FineTuneConfig {
  std::size_t k = 2;
  MaskVariant variant = MaskVariant::row;
  RegConfig reg;
  double tau = 0.1;
  std::size_t subsets_n = 1;
  OptimConfig optim;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

void validate(const FineTuneConfig& cfg, const ModelParams& pre, const TaskPair& task);

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss_r = 0.0;   // sample-weighted mean over the epoch's batches
  double ce_loss = 0.0;
  double test_acc = 0.0;
};

struct TrainReport {
  std::string variant;
  std::vector<EpochRecord> epochs;
  double final_accuracy = 0.0;
  double trainable_fraction = 0.0;
  std::size_t trainable_params = 0;
  std::size_t total_params = 0;
  std::uint64_t storage_bits = 0;
  std::vector<double> layer_distances;  // ||W^l - W_anchor^l|| incl. bias
  std::size_t mask_subset = 0;
  std::vector<double> subset_losses;
  double wall_seconds = 0.0;
};

struct FineTuneResult {
  ModelParams model;
  ModelParams anchor;  // pretrained body with the re-initialized head
  GradientMaskSet masks;
  TrainReport report;
};

// Anchor for fine-tuning: `pre` with a head re-initialized for the target
// classes from cfg.seed. Regularization pulls toward this anchor.
ModelParams finetune_anchor(const ModelParams& pre, const TaskPair& task, const FineTuneConfig& cfg);

// Subset selection, mask computation at the anchor, then masked Adam on
// cross entropy + penalty under the cosine warmup schedule.
FineTuneResult finetune(const ModelParams& pre, const TaskPair& task, const FineTuneConfig& cfg);

// Head-only training with the same loop (k and variant ignored).
FineTuneResult linear_probe(const ModelParams& pre, const TaskPair& task, const FineTuneConfig& cfg);

// Plain full fine-tuning with unmasked Adam on cross entropy only; the
// reference the full/lambda=0 configuration must reproduce.
FineTuneResult full_finetune(const ModelParams& pre, const TaskPair& task, const FineTuneConfig& cfg);

// Fraction of argmax-correct predictions; ties go to the lowest class.
double evaluate(const ModelParams& model, const Dataset& data);

enum class AblationAxis { k, lambda, regular_blocks, subsets_n, variant, norm };

std::string_view to_string(AblationAxis axis) noexcept;
AblationAxis parse_axis(std::string_view name);

// base_cfg with one axis set from its textual value.
FineTuneConfig apply_axis(const FineTuneConfig& base_cfg, AblationAxis axis, std::string_view value);

// One finetune per value, everything else (seeds included) fixed. Runs may
// execute concurrently; the result order follows `values`.
std::vector<TrainReport> ablate(const ModelParams& pre, const TaskPair& task,
                                const FineTuneConfig& base_cfg, AblationAxis axis,
                                std::span<const std::string> values);

}  // namespace grft
