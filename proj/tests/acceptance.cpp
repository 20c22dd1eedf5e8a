// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any
// failure. Tolerances are fixed below.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "grft/config.hpp"
#include "grft/data.hpp"
#include "grft/harness.hpp"
#include "grft/masking.hpp"
#include "grft/numeric.hpp"
#include "grft/optim.hpp"
#include "test_support.hpp"

using namespace grft;
namespace t = grft::testing;

namespace {

constexpr double kOptimalityTol = 1e-12;
constexpr double kIdentityTol = 1e-12;
constexpr double kFiniteDiffTol = 1e-4;
constexpr double kAdamTol = 1e-15;
constexpr double kReductionTol = 1e-12;
constexpr double kPullRatio = 0.10;
constexpr double kScheduleTol = 1e-12;
constexpr double kMinAccuracy = 0.90;
constexpr double kMaxFraction = 0.25;
// First reference run of configs/reference.json (seed 7), row variant, k=2.
constexpr double kPinnedAccuracy = 0.9250;
constexpr double kPinnedTol = 0.005;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int id, const char* name, const std::function<Outcome()>& body) {
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  std::printf("%s AC%d %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Exhaustive minimum of the row-mask objective over k-subsets (bitmask walk).
double oracle_best_rows(const Matrix& h, std::size_t k) {
  double best = INFINITY;
  for (std::uint32_t bits = 0; bits < (1u << h.rows()); ++bits) {
    if (static_cast<std::size_t>(std::popcount(bits)) != k) continue;
    double s = 0.0;
    for (std::size_t i = 0; i < h.rows(); ++i) {
      if (bits & (1u << i)) continue;
      for (double v : h.row(i)) s += v * v;
    }
    best = std::min(best, s);
  }
  return best;
}

struct Reference {
  RunConfig cfg;
  TaskPair task;
  ModelParams pre;
};

const Reference& reference() {
  static const Reference ref = [] {
    Reference r;
    r.cfg = load_run_config(GRFT_SOURCE_DIR "/configs/reference.json");
    r.task = gen_task(r.cfg.task, r.cfg.task_seed());
    r.pre = pretrain(r.task, r.cfg.pretrain);
    return r;
  }();
  return ref;
}

Outcome selection_optimality() {
  const auto start = Clock::now();
  Rng rng(1001);
  double worst = 0.0;
  std::size_t cases = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t r = 1 + rng.below(8), c = 1 + rng.below(8);
    const Matrix h = t::random_matrix(r, c, rng);
    const double scale = std::max(1.0, frobenius_sq(h));
    for (std::size_t k = 1; k <= r; ++k, ++cases) {
      const double got = mask_objective(h, build_mask(h, k, MaskVariant::row));
      worst = std::max(worst, std::abs(got - oracle_best_rows(h, k)) / scale);
    }
    const Matrix ht = transpose(h);
    for (std::size_t k = 1; k <= c; ++k, ++cases) {
      const double got = mask_objective(h, build_mask(h, k, MaskVariant::col));
      worst = std::max(worst, std::abs(got - oracle_best_rows(ht, k)) / scale);
    }
  }
  const double secs = seconds_since(start);
  return {worst <= kOptimalityTol && secs < 5.0,
          fmt("%zu (matrix,k) cases, max gap %.2e (tol %.0e), %.3fs (< 5s)", cases, worst, kOptimalityTol, secs)};
}

Outcome energy_identity() {
  const auto start = Clock::now();
  Rng rng(1002);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t r = 1 + rng.below(16), c = 1 + rng.below(16);
    const Matrix g = t::random_matrix(r, c, rng);
    std::vector<std::uint8_t> bits(r * c);
    for (auto& b : bits) b = static_cast<std::uint8_t>(rng.below(2));
    const LayerMask m(r, c, DenseBits{bits});
    const double lhs = inner(g, elementwise_mul(g, to_dense(m)));
    const double rhs = retained_energy(g, m);
    worst = std::max(worst, std::abs(lhs - rhs) / std::max({std::abs(lhs), std::abs(rhs), 1e-300}));
  }
  const double secs = seconds_since(start);
  return {worst <= kIdentityTol && secs < 1.0,
          fmt("1000 pairs, max rel err %.2e (tol %.0e), %.3fs (< 1s)", worst, kIdentityTol, secs)};
}

Outcome gradient_fidelity() {
  const auto start = Clock::now();
  Rng rng(1003);
  double worst_ce = 0.0, worst_scl = 0.0, worst_l1 = 0.0, worst_l2 = 0.0;
  int instances = 0;
  while (instances < 50) {
    const std::vector<std::size_t> dims{3 + rng.below(3), 4 + rng.below(3), 3 + rng.below(3), 2 + rng.below(3)};
    const ModelParams m = t::random_model(dims, rng);
    const ModelParams pre = t::random_model(dims, rng);
    const std::size_t n = 4 + rng.below(5);
    const Matrix x = t::random_matrix(n, dims.front(), rng);
    const Labels y = t::random_labels(n, dims.back(), rng);
    if (t::relu_margin(m, x) < 1e-3) continue;
    bool l1_smooth = true;
    for (std::size_t l = 0; l < m.layers.size(); ++l)
      for (std::size_t i = 0; i < m.layers[l].weight.size(); ++i)
        if (std::abs(m.layers[l].weight.data()[i] - pre.layers[l].weight.data()[i]) < 1e-3) l1_smooth = false;
    if (!l1_smooth) continue;
    ++instances;

    const auto fwd = forward(m, x);
    const auto ce_g = backward_from_logits(m, fwd.cache, cross_entropy(fwd.logits, y).grad);
    const auto scl_g = backward_from_features(m, fwd.cache, scl_loss(fwd.features, y, 0.3).grad);
    const RegConfig l1{0.7, NormKind::l1, RegularSet{m.layers.size(), true, true}};
    const RegConfig l2{0.7, NormKind::l2, RegularSet{m.layers.size(), true, true}};
    const auto l1_g = reg_penalty(m, pre, l1).grad;
    const auto l2_g = reg_penalty(m, pre, l2).grad;

    for (std::size_t l = 0; l < m.layers.size(); ++l) {
      auto fd = [&](auto loss) {
        return finite_diff_grad(
            [&](const Matrix& w) {
              ModelParams probe = m;
              probe.layers[l].weight = w;
              return loss(probe);
            },
            m.layers[l].weight, 1e-5);
      };
      worst_ce = std::max(worst_ce, t::max_rel_err(ce_g.layers[l].weight, fd([&](const ModelParams& p) {
                                                     return cross_entropy(forward(p, x).logits, y).loss;
                                                   })));
      if (l + 1 < m.layers.size())
        worst_scl = std::max(worst_scl, t::max_rel_err(scl_g.layers[l].weight, fd([&](const ModelParams& p) {
                                                         return scl_loss(forward(p, x).features, y, 0.3).loss;
                                                       })));
      worst_l1 = std::max(worst_l1, t::max_rel_err(l1_g.layers[l].weight, fd([&](const ModelParams& p) {
                                                     return reg_penalty(p, pre, l1).loss;
                                                   })));
      worst_l2 = std::max(worst_l2, t::max_rel_err(l2_g.layers[l].weight, fd([&](const ModelParams& p) {
                                                     return reg_penalty(p, pre, l2).loss;
                                                   })));
    }
  }
  const double secs = seconds_since(start);
  const double worst = std::max({worst_ce, worst_scl, worst_l1, worst_l2});
  return {worst < kFiniteDiffTol && secs < 30.0,
          fmt("50 instances, max rel err ce %.1e scl %.1e l1 %.1e l2 %.1e (tol %.0e), %.2fs (< 30s)", worst_ce,
              worst_scl, worst_l1, worst_l2, kFiniteDiffTol, secs)};
}

Outcome frozen_immutability() {
  const auto& ref = reference();
  std::string detail;
  bool ok = true;
  for (auto variant : {MaskVariant::row, MaskVariant::col, MaskVariant::sparse}) {
    FineTuneConfig cfg = ref.cfg.finetune;
    cfg.variant = variant;
    const auto r = finetune(ref.pre, ref.task, cfg);
    std::size_t frozen = 0, changed = 0;
    for (std::size_t l = 0; l < r.model.layers.size(); ++l) {
      const auto& mask = r.masks.layers[l];
      const auto& now = r.model.layers[l];
      const auto& init = r.anchor.layers[l];
      for (std::size_t i = 0; i < mask.rows(); ++i) {
        for (std::size_t j = 0; j < mask.cols(); ++j) {
          if (mask.selects(i, j)) continue;
          ++frozen;
          if (std::bit_cast<std::uint64_t>(now.weight(i, j)) != std::bit_cast<std::uint64_t>(init.weight(i, j)))
            ++changed;
        }
        if (mask.bias_trainable(i)) continue;
        ++frozen;
        if (std::bit_cast<std::uint64_t>(now.bias[i]) != std::bit_cast<std::uint64_t>(init.bias[i])) ++changed;
      }
    }
    ok = ok && changed == 0 && frozen > 0 && r.report.epochs.size() == 100;
    detail += fmt("%s %zu/%zu frozen changed; ", std::string(to_string(variant)).c_str(), changed, frozen);
  }
  return {ok, detail + "100 epochs each"};
}

Outcome masked_adam_equivalence() {
  Rng rng(1005);
  const std::vector<std::size_t> dims{6, 8, 7, 3};
  ModelParams a = t::random_model(dims, rng);
  ModelParams b = a;
  GradientMaskSet masks;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    const auto& w = a.layers[l].weight;
    const auto variant = static_cast<MaskVariant>(l % 3);
    const std::size_t extent = variant == MaskVariant::row ? w.rows() : w.cols();
    masks.layers.push_back(build_mask(t::random_matrix(w.rows(), w.cols(), rng), 1 + extent / 3, variant));
  }
  auto random_grad = [&](const ModelParams& m) {
    GradientSet g = GradientSet::zeros_like(m);
    for (auto& l : g.layers) {
      for (double& v : l.weight.data()) v = rng.normal();
      for (double& v : l.bias) v = rng.normal();
    }
    return g;
  };
  OptimConfig cfg;
  AdamState sa = AdamState::zeros_like(a), sb = AdamState::zeros_like(b);
  for (int step = 0; step < 100; ++step) {
    const GradientSet g = random_grad(a);
    GradientSet zeroed = g;
    for (std::size_t l = 0; l < g.layers.size(); ++l)
      for (std::size_t i = 0; i < g.layers[l].weight.rows(); ++i) {
        for (std::size_t j = 0; j < g.layers[l].weight.cols(); ++j)
          if (!masks.layers[l].selects(i, j)) zeroed.layers[l].weight(i, j) = 0.0;
        if (!masks.layers[l].bias_trainable(i)) zeroed.layers[l].bias[i] = 0.0;
      }
    const double lr = 1e-2 * (1.0 + rng.uniform());
    masked_adam_step(a, sa, g, masks, lr, cfg);
    adam_step(b, sb, zeroed, lr, cfg);
  }
  double worst = 0.0;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    for (std::size_t i = 0; i < a.layers[l].weight.size(); ++i)
      worst = std::max(worst, std::abs(a.layers[l].weight.data()[i] - b.layers[l].weight.data()[i]));
    for (std::size_t i = 0; i < a.layers[l].bias.size(); ++i)
      worst = std::max(worst, std::abs(a.layers[l].bias[i] - b.layers[l].bias[i]));
  }

  ModelParams c = t::random_model(dims, rng);
  ModelParams d = c;
  AdamState sc = AdamState::zeros_like(c), sd = AdamState::zeros_like(d);
  const GradientMaskSet full = full_masks(c);
  for (int step = 0; step < 100; ++step) {
    const GradientSet g = random_grad(c);
    masked_adam_step(c, sc, g, full, 1e-2, cfg);
    adam_step(d, sd, g, 1e-2, cfg);
  }
  const bool exact = fingerprint(c) == fingerprint(d);
  return {worst <= kAdamTol && exact,
          fmt("100 steps, max |diff| %.1e (tol %.0e); all-full masks bit-identical: %s", worst, kAdamTol,
              exact ? "yes" : "no")};
}

Outcome reduction() {
  const auto& ref = reference();
  FineTuneConfig cfg = ref.cfg.finetune;
  cfg.variant = MaskVariant::full;
  cfg.reg.lambda = 0.0;
  const auto ours = finetune(ref.pre, ref.task, cfg);
  const auto plain = full_finetune(ref.pre, ref.task, cfg);
  if (ours.report.epochs.size() != plain.report.epochs.size()) return {false, "epoch count differs"};
  double worst = 0.0;
  for (std::size_t e = 0; e < ours.report.epochs.size(); ++e) {
    const auto& a = ours.report.epochs[e];
    const auto& b = plain.report.epochs[e];
    worst = std::max({worst, t::rel_err(a.loss_r, b.loss_r, 1.0), std::abs(a.test_acc - b.test_acc)});
  }
  double param = 0.0;
  for (std::size_t l = 0; l < ours.model.layers.size(); ++l)
    for (std::size_t i = 0; i < ours.model.layers[l].weight.size(); ++i)
      param = std::max(param, std::abs(ours.model.layers[l].weight.data()[i] - plain.model.layers[l].weight.data()[i]));
  return {worst <= kReductionTol && param <= kReductionTol,
          fmt("%zu epochs, max per-epoch loss/acc diff %.1e, final weight diff %.1e (tol %.0e)",
              ours.report.epochs.size(), worst, param, kReductionTol)};
}

Outcome regularization_pull() {
  const auto& ref = reference();
  FineTuneConfig cfg = ref.cfg.finetune;
  cfg.reg.lambda = 0.0;
  const auto free_run = finetune(ref.pre, ref.task, cfg);
  cfg.reg.lambda = 1e2;
  const auto pulled = finetune(ref.pre, ref.task, cfg);
  bool ok = true;
  std::string detail;
  for (std::size_t l = 0; l < ref.pre.layers.size(); ++l) {
    if (!cfg.reg.set.contains(ref.pre, l)) continue;
    const double a = pulled.report.layer_distances[l], b = free_run.report.layer_distances[l];
    const double ratio = b > 0.0 ? a / b : INFINITY;
    ok = ok && ratio < kPullRatio;
    detail += fmt("layer %zu %.3e/%.3e=%.3f; ", l, a, b, ratio);
  }
  return {ok, detail + fmt("need < %.2f", kPullRatio)};
}

Outcome storage_claim() {
  Rng rng(1008);
  const Matrix h = t::random_matrix(768, 768, rng);
  const auto row = storage_bits(build_mask(h, 2, MaskVariant::row));
  const auto sparse = storage_bits(build_mask(h, 2, MaskVariant::sparse));
  std::vector<std::uint8_t> bits(768 * 768, 0);
  const auto dense = storage_bits(LayerMask(768, 768, DenseBits{bits}));
  const double ratio = static_cast<double>(row) / static_cast<double>(dense);
  return {row == 20 && dense == 589824 && sparse == 15360 && ratio < 4e-5,
          fmt("row %llu bits, dense %llu, sparse %llu, row/dense %.2e (< 4e-5)", static_cast<unsigned long long>(row),
              static_cast<unsigned long long>(dense), static_cast<unsigned long long>(sparse), ratio)};
}

Outcome schedule() {
  OptimConfig cfg;
  cfg.base_lr = 1e-2;
  cfg.warmup_epochs = 10;
  cfg.total_epochs = 100;
  const double at_warm = cosine_warmup_lr(10, cfg);
  const double at_end = cosine_warmup_lr(100, cfg);
  const double mid = cosine_warmup_lr(55, cfg);
  bool monotone = true;
  for (std::size_t e = 10; e < 100; ++e) monotone = monotone && cosine_warmup_lr(e + 1, cfg) <= cosine_warmup_lr(e, cfg);
  const bool ok = std::abs(at_warm - 1e-2) <= kScheduleTol && std::abs(at_end) <= kScheduleTol &&
                  std::abs(mid - 5e-3) <= kScheduleTol && monotone;
  return {ok, fmt("lr(10)=%.3e lr(55)=%.3e lr(100)=%.1e (tol %.0e), non-increasing after warmup: %s", at_warm,
                  mid, at_end, kScheduleTol, monotone ? "yes" : "no")};
}

// Mean SCL loss recomputed with the plain-loop reference.
double reevaluate(const ModelParams& m, const Dataset& d, double tau) {
  return t::reference_scl(forward(m, d.x).features, d.y, tau) / static_cast<double>(d.size());
}

Outcome subset_selection() {
  const auto& ref = reference();
  const auto& cfg = ref.cfg.finetune;
  const ModelParams anchor = finetune_anchor(ref.pre, ref.task, cfg);
  const auto parts = partition_subsets(ref.task.target_train, cfg.subsets_n, 2024);
  const auto choice = select_mask_subset(anchor, parts, cfg.tau);
  bool ok = true;
  const double chosen = reevaluate(anchor, parts[choice.index], cfg.tau);
  std::string losses;
  for (const auto& p : parts) {
    const double v = reevaluate(anchor, p, cfg.tau);
    ok = ok && chosen <= v * (1.0 + 1e-12);
    losses += fmt("%.4f ", v);
  }
  const auto one = partition_subsets(ref.task.target_train, 1, 2024);
  const auto single = select_mask_subset(anchor, one, cfg.tau);
  const bool identity = one.size() == 1 && single.index == 0 && one[0].size() == ref.task.target_train.size() &&
                        single.losses[0] == mean_scl_loss(anchor, ref.task.target_train, cfg.tau);
  return {ok && identity, fmt("n=%zu losses [%s] chose %zu; n=1 is the whole set: %s", parts.size(),
                              losses.c_str(), choice.index, identity ? "yes" : "no")};
}

Outcome transfer_reproduction() {
  const auto& ref = reference();
  const auto start = Clock::now();
  const auto grft = finetune(ref.pre, ref.task, ref.cfg.finetune);
  const double secs = seconds_since(start);
  const auto probe = linear_probe(ref.pre, ref.task, ref.cfg.finetune);
  const double acc = grft.report.final_accuracy;
  const double frac = grft.report.trainable_fraction;
  const bool ok = acc > probe.report.final_accuracy && acc >= kMinAccuracy && frac < kMaxFraction && secs < 60.0 &&
                  std::abs(acc - kPinnedAccuracy) <= kPinnedTol;
  return {ok, fmt("row k=2 acc %.4f (pinned %.4f +/- %.3f, >= %.2f) vs linear probe %.4f; trainable %.2f%% (< %.0f%%); "
                  "%.2fs (< 60s)",
                  acc, kPinnedAccuracy, kPinnedTol, kMinAccuracy, probe.report.final_accuracy, 100.0 * frac,
                  100.0 * kMaxFraction, secs)};
}

Outcome variant_counts() {
  const auto& ref = reference();
  // dims 16-32-32-4, k=2: layer sizes 16x32, 32x32, head 4x32 (132 params, always trained).
  const std::size_t total = (16 * 32 + 32) + (32 * 32 + 32) + 132;
  struct Case {
    MaskVariant v;
    std::size_t expected;
  };
  const Case cases[] = {
      {MaskVariant::row, 2 * (16 + 1) + 2 * (32 + 1) + 132},
      {MaskVariant::col, 2 * 32 + 2 * 32 + 132},
      {MaskVariant::sparse, (32 * 2 + 32) + (32 * 2 + 32) + 132},
  };
  bool ok = true;
  std::string detail;
  for (const auto& c : cases) {
    FineTuneConfig cfg = ref.cfg.finetune;
    cfg.variant = c.v;
    const auto r = finetune(ref.pre, ref.task, cfg).report;
    const double expected_frac = static_cast<double>(c.expected) / static_cast<double>(total);
    ok = ok && r.trainable_params == c.expected && r.total_params == total && r.trainable_fraction == expected_frac &&
         std::isfinite(r.final_accuracy);
    detail += fmt("%s %zu/%zu (expect %zu) acc %.4f; ", std::string(to_string(c.v)).c_str(), r.trainable_params,
                  r.total_params, c.expected, r.final_accuracy);
  }
  return {ok, detail};
}

}  // namespace

int main() {
  report(1, "selection-optimality", selection_optimality);
  report(2, "retained-energy-identity", energy_identity);
  report(3, "gradient-fidelity", gradient_fidelity);
  report(4, "frozen-immutability", frozen_immutability);
  report(5, "masked-adam-equivalence", masked_adam_equivalence);
  report(6, "full-variant-reduction", reduction);
  report(7, "regularization-pull", regularization_pull);
  report(8, "storage-accounting", storage_claim);
  report(9, "lr-schedule", schedule);
  report(10, "subset-selection", subset_selection);
  report(11, "desk-scale-transfer", transfer_reproduction);
  report(12, "variant-trainable-counts", variant_counts);
  std::printf("%d/12 criteria passed\n", 12 - failures);
  return failures == 0 ? 0 : 1;
}
