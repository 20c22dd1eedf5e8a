#include "grft/harness.hpp"

#include <chrono>
#include <cmath>
#include <exception>
#include <numeric>
#include <string>

#include "grft/error.hpp"
#include "grft/rng.hpp"

namespace grft {

namespace {

// Stream ids for Rng::derive on the fine-tune seed.
enum Stream : std::uint64_t {
  kHead = 101,
  kPartition = 102,
  kShuffle = 103,
  kPretrainInit = 201,
  kPretrainShuffle = 202,
};

struct Minibatch {
  Matrix x;
  Labels y;
};

// Splits a permutation of `data` into batches; the last one may be smaller.
std::vector<Minibatch> make_batches(const Dataset& data, std::span<const std::size_t> order,
                                    std::size_t batch_size) {
  std::vector<Minibatch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t len = std::min(batch_size, order.size() - start);
    auto part = data.subset(order.subspan(start, len));
    batches.push_back({std::move(part.x), std::move(part.y)});
  }
  return batches;
}

class EpochShuffler {
 public:
  EpochShuffler(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
  }
  std::span<const std::size_t> next() {
    rng_.shuffle(std::span<std::size_t>(order_));
    return order_;
  }

 private:
  std::vector<std::size_t> order_;
  Rng rng_;
};

double layer_distance(const Layer& a, const Layer& b) {
  double acc = 0.0;
  const auto wa = a.weight.data(), wb = b.weight.data();
  for (std::size_t i = 0; i < wa.size(); ++i) acc += (wa[i] - wb[i]) * (wa[i] - wb[i]);
  for (std::size_t i = 0; i < a.bias.size(); ++i) acc += (a.bias[i] - b.bias[i]) * (a.bias[i] - b.bias[i]);
  return std::sqrt(acc);
}

void fill_summary(FineTuneResult& r, double seconds) {
  auto& rep = r.report;
  rep.final_accuracy = rep.epochs.empty() ? 0.0 : rep.epochs.back().test_acc;
  rep.total_params = r.model.parameter_count();
  rep.trainable_params = trainable_count(r.model, r.masks);
  rep.trainable_fraction = trainable_fraction(r.model, r.masks);
  rep.storage_bits = storage_bits(r.masks);
  rep.layer_distances.clear();
  for (std::size_t l = 0; l < r.model.layers.size(); ++l)
    rep.layer_distances.push_back(layer_distance(r.model.layers[l], r.anchor.layers[l]));
  rep.wall_seconds = seconds;
}

double elapsed(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Masked training loop shared by finetune and linear_probe.
void train_masked(FineTuneResult& r, const TaskPair& task, const FineTuneConfig& cfg) {
  auto& model = r.model;
  AdamState state = AdamState::zeros_like(model);
  EpochShuffler shuffler(task.target_train.size(), Rng::derive(cfg.seed, kShuffle));
  const auto n = static_cast<double>(task.target_train.size());
  for (std::size_t e = 0; e < cfg.optim.total_epochs; ++e) {
    EpochRecord rec;
    rec.epoch = e;
    rec.lr = cosine_warmup_lr(e, cfg.optim);
    try {
      for (const auto& b : make_batches(task.target_train, shuffler.next(), cfg.batch_size)) {
        const auto obj = combined_grad(model, r.anchor, Batch{b.x, b.y}, cfg.reg);
        const auto w = static_cast<double>(b.y.size()) / n;
        rec.loss_r += obj.loss_r * w;
        rec.ce_loss += obj.cross * w;
        masked_adam_step(model, state, obj.grad, r.masks, rec.lr, cfg.optim);
      }
    } catch (const NumericError& err) {
      throw NumericError("epoch " + std::to_string(e) + ": " + err.what());
    }
    rec.test_acc = evaluate(model, task.target_test);
    r.report.epochs.push_back(rec);
  }
}

}  // namespace

ModelParams pretrain(const TaskPair& task, const PretrainConfig& cfg) {
  if (cfg.dims.size() < 2) throw ConfigError("pretrain.dims needs at least two entries");
  if (cfg.dims.front() != task.source.dim())
    throw ConfigError("pretrain.dims[0]=" + std::to_string(cfg.dims.front()) +
                      " does not match task dim " + std::to_string(task.source.dim()));
  if (cfg.dims.back() != task.source.num_classes)
    throw ConfigError("pretrain.dims last entry must equal the source class count " +
                      std::to_string(task.source.num_classes));
  if (cfg.batch_size == 0) throw ConfigError("pretrain.batch_size must be positive");
  ModelParams model = init_model(cfg.dims, Rng::derive(cfg.seed, kPretrainInit));
  if (cfg.epochs == 0) return model;
  OptimConfig optim = cfg.optim;
  optim.total_epochs = cfg.epochs;
  validate(optim);

  AdamState state = AdamState::zeros_like(model);
  EpochShuffler shuffler(task.source.size(), Rng::derive(cfg.seed, kPretrainShuffle));
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const double lr = cosine_warmup_lr(e, optim);
    for (const auto& b : make_batches(task.source, shuffler.next(), cfg.batch_size)) {
      auto fwd = forward(model, b.x);
      auto ce = cross_entropy(fwd.logits, b.y);
      if (!std::isfinite(ce.loss))
        throw NumericError("pretrain diverged at epoch " + std::to_string(e));
      adam_step(model, state, backward_from_logits(model, fwd.cache, ce.grad), lr, optim);
    }
  }
  return model;
}

void validate(const FineTuneConfig& cfg, const ModelParams& pre, const TaskPair& task) {
  validate(pre);
  validate(cfg.optim);
  if (pre.input_dim() != task.target_train.dim())
    throw ConfigError("checkpoint input width " + std::to_string(pre.input_dim()) +
                      " does not match task dim " + std::to_string(task.target_train.dim()));
  if (cfg.batch_size == 0) throw ConfigError("finetune.batch_size must be positive");
  if (!(cfg.tau > 0.0) || !std::isfinite(cfg.tau)) throw ConfigError("finetune.tau must be positive");
  validate(cfg.reg, pre);
  validate_k(pre, cfg.k, cfg.variant);
  if (cfg.variant != MaskVariant::full &&
      (cfg.subsets_n < 1 || cfg.subsets_n > task.target_train.size()))
    throw ConfigError("finetune.subsets must be in [1, " + std::to_string(task.target_train.size()) + "]");
}

ModelParams finetune_anchor(const ModelParams& pre, const TaskPair& task, const FineTuneConfig& cfg) {
  ModelParams anchor = pre;
  reinit_head(anchor, task.target_train.num_classes, Rng::derive(cfg.seed, kHead));
  return anchor;
}

FineTuneResult finetune(const ModelParams& pre, const TaskPair& task, const FineTuneConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  validate(cfg, pre, task);
  FineTuneResult r;
  r.anchor = finetune_anchor(pre, task, cfg);
  r.report.variant = std::string(to_string(cfg.variant));
  if (cfg.variant == MaskVariant::full) {
    r.masks = full_masks(r.anchor);
  } else {
    const auto subsets =
        partition_subsets(task.target_train, cfg.subsets_n, Rng::derive(cfg.seed, kPartition));
    const auto choice = select_mask_subset(r.anchor, subsets, cfg.tau);
    r.report.mask_subset = choice.index;
    r.report.subset_losses = choice.losses;
    const auto& chosen = subsets[choice.index];
    r.masks = compute_mask_set(r.anchor, MaskData{chosen.x, chosen.y}, cfg.k, cfg.variant, cfg.tau);
  }
  r.model = r.anchor;
  train_masked(r, task, cfg);
  fill_summary(r, elapsed(start));
  return r;
}

FineTuneResult linear_probe(const ModelParams& pre, const TaskPair& task, const FineTuneConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  FineTuneConfig probe = cfg;
  probe.variant = MaskVariant::full;
  validate(probe, pre, task);
  FineTuneResult r;
  r.anchor = finetune_anchor(pre, task, cfg);
  r.report.variant = "head";
  r.masks = head_only_masks(r.anchor);
  r.model = r.anchor;
  train_masked(r, task, cfg);
  fill_summary(r, elapsed(start));
  return r;
}

FineTuneResult full_finetune(const ModelParams& pre, const TaskPair& task, const FineTuneConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  FineTuneConfig ref = cfg;
  ref.variant = MaskVariant::full;
  validate(ref, pre, task);
  FineTuneResult r;
  r.anchor = finetune_anchor(pre, task, cfg);
  r.report.variant = "full-reference";
  r.masks = full_masks(r.anchor);
  r.model = r.anchor;

  AdamState state = AdamState::zeros_like(r.model);
  EpochShuffler shuffler(task.target_train.size(), Rng::derive(cfg.seed, kShuffle));
  const auto n = static_cast<double>(task.target_train.size());
  for (std::size_t e = 0; e < cfg.optim.total_epochs; ++e) {
    EpochRecord rec;
    rec.epoch = e;
    rec.lr = cosine_warmup_lr(e, cfg.optim);
    for (const auto& b : make_batches(task.target_train, shuffler.next(), cfg.batch_size)) {
      auto fwd = forward(r.model, b.x);
      auto ce = cross_entropy(fwd.logits, b.y);
      const auto w = static_cast<double>(b.y.size()) / n;
      rec.loss_r += ce.loss * w;
      rec.ce_loss += ce.loss * w;
      adam_step(r.model, state, backward_from_logits(r.model, fwd.cache, ce.grad), rec.lr, cfg.optim);
    }
    rec.test_acc = evaluate(r.model, task.target_test);
    r.report.epochs.push_back(rec);
  }
  fill_summary(r, elapsed(start));
  return r;
}

double evaluate(const ModelParams& model, const Dataset& data) {
  if (model.output_dim() != data.num_classes)
    throw ShapeError("evaluate: head width " + std::to_string(model.output_dim()) + " != " +
                     std::to_string(data.num_classes) + " classes");
  if (data.size() == 0) throw InputError("evaluate: empty dataset");
  const auto fwd = forward(model, data.x);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto row = fwd.logits.row(i);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
      if (row[c] > row[best]) best = c;
    correct += best == data.y[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

std::string_view to_string(AblationAxis axis) noexcept {
  switch (axis) {
    case AblationAxis::k: return "k";
    case AblationAxis::lambda: return "lambda";
    case AblationAxis::regular_blocks: return "regular_blocks";
    case AblationAxis::subsets_n: return "subsets_n";
    case AblationAxis::variant: return "variant";
    case AblationAxis::norm: return "norm";
  }
  return "k";
}

AblationAxis parse_axis(std::string_view name) {
  for (auto a : {AblationAxis::k, AblationAxis::lambda, AblationAxis::regular_blocks,
                 AblationAxis::subsets_n, AblationAxis::variant, AblationAxis::norm})
    if (name == to_string(a)) return a;
  throw ConfigError("unknown ablation axis '" + std::string(name) + "'");
}

namespace {

std::size_t parse_count(std::string_view text, std::string_view axis) {
  try {
    std::size_t used = 0;
    const std::string s(text);
    const long long v = std::stoll(s, &used);
    if (used != s.size() || v < 0) throw std::invalid_argument(s);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ConfigError(std::string(axis) + ": '" + std::string(text) + "' is not a count");
  }
}

double parse_real(std::string_view text, std::string_view axis) {
  try {
    std::size_t used = 0;
    const std::string s(text);
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(std::string(axis) + ": '" + std::string(text) + "' is not a number");
  }
}

}  // namespace

FineTuneConfig apply_axis(const FineTuneConfig& base_cfg, AblationAxis axis, std::string_view value) {
  FineTuneConfig cfg = base_cfg;
  switch (axis) {
    case AblationAxis::k: cfg.k = parse_count(value, "k"); break;
    case AblationAxis::lambda: cfg.reg.lambda = parse_real(value, "lambda"); break;
    case AblationAxis::regular_blocks:
      cfg.reg.set.last_l = parse_count(value, "regular_blocks");
      break;
    case AblationAxis::subsets_n: cfg.subsets_n = parse_count(value, "subsets_n"); break;
    case AblationAxis::variant: cfg.variant = parse_variant(value); break;
    case AblationAxis::norm: cfg.reg.norm = parse_norm(value); break;
  }
  return cfg;
}

std::vector<TrainReport> ablate(const ModelParams& pre, const TaskPair& task,
                                const FineTuneConfig& base_cfg, AblationAxis axis,
                                std::span<const std::string> values) {
  if (values.empty()) throw ConfigError("ablate: no values");
  std::vector<FineTuneConfig> cfgs;
  for (const auto& v : values) {
    cfgs.push_back(apply_axis(base_cfg, axis, v));
    validate(cfgs.back(), pre, task);
  }
  std::vector<TrainReport> reports(cfgs.size());
  std::vector<std::exception_ptr> errors(cfgs.size());
  const auto n = static_cast<std::int64_t>(cfgs.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    try {
      reports[idx] = finetune(pre, task, cfgs[idx]).report;
    } catch (...) {
      errors[idx] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return reports;
}

}  // namespace grft
