// Command-line driver: pretrain, finetune, mask-report, ablate.
//
// Exit codes: 0 success, 2 invalid config/input, 3 numeric failure,
// 1 anything else.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "grft/config.hpp"
#include "grft/data.hpp"
#include "grft/error.hpp"
#include "grft/harness.hpp"
#include "grft/io.hpp"
#include "grft/masking.hpp"
#include "grft/rng.hpp"

namespace fs = std::filesystem;
using namespace grft;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct Options {
  std::string config;
  std::string checkpoint;
  std::string out;
  std::string data;
  std::optional<std::uint64_t> seed;
  bool verify_oracle = false;
  std::size_t k = 2;
  std::string variant = "row";
  double tau = 0.1;
  std::string axis;
  std::vector<std::string> values;
  std::string baseline;
};

RunConfig load_config(const Options& o) {
  RunConfig cfg = load_run_config(o.config);
  if (o.seed) cfg.set_seed(*o.seed);
  return cfg;
}

fs::path with_suffix(const fs::path& p, const std::string& suffix) {
  fs::path out = p;
  out.replace_extension();
  out += suffix;
  return out;
}

void require_finite_report(const TrainReport& r) {
  auto bad = [](double v) { return !std::isfinite(v); };
  for (const auto& e : r.epochs)
    if (bad(e.lr) || bad(e.loss_r) || bad(e.ce_loss) || bad(e.test_acc))
      throw NumericError("report contains non-finite values");
  if (bad(r.final_accuracy) || r.final_accuracy < 0.0 || r.final_accuracy > 1.0)
    throw NumericError("final accuracy outside [0, 1]");
}

int cmd_pretrain(const Options& o) {
  const RunConfig cfg = load_config(o);
  const TaskPair task = gen_task(cfg.task, cfg.task_seed());
  const ModelParams model = pretrain(task, cfg.pretrain);
  save_checkpoint(model, o.out);
  std::printf("pretrain: %zu params, source accuracy %.4f, checkpoint %s\n", model.parameter_count(),
              evaluate(model, task.source), o.out.c_str());
  return kExitOk;
}

int cmd_finetune(const Options& o) {
  const RunConfig cfg = load_config(o);
  const ModelParams pre = load_checkpoint(o.checkpoint);
  const TaskPair task = gen_task(cfg.task, cfg.task_seed());
  FineTuneResult result;
  if (o.baseline.empty())
    result = finetune(pre, task, cfg.finetune);
  else if (o.baseline == "full")
    result = full_finetune(pre, task, cfg.finetune);
  else if (o.baseline == "linear")
    result = linear_probe(pre, task, cfg.finetune);
  else
    throw ConfigError("unknown baseline '" + o.baseline + "' (expected full or linear)");
  require_finite_report(result.report);

  const fs::path out(o.out);
  json doc{{"config", to_json(cfg)}, {"report", report_to_json(result.report)}};
  write_json_file(doc, out);
  write_report_csv(result.report, with_suffix(out, ".csv"));
  write_json_file(masks_to_json(result.masks), with_suffix(out, ".masks.json"));
  const auto& r = result.report;
  std::printf("finetune[%s]: accuracy %.4f, trainable %zu/%zu (%.2f%%), mask %llu bits, %.2fs\n",
              r.variant.c_str(), r.final_accuracy, r.trainable_params, r.total_params,
              100.0 * r.trainable_fraction, static_cast<unsigned long long>(r.storage_bits),
              r.wall_seconds);
  return kExitOk;
}

int cmd_mask_report(const Options& o) {
  const ModelParams pre = load_checkpoint(o.checkpoint);
  Dataset data;
  double tau = o.tau;
  if (!o.data.empty()) {
    data = read_dataset_csv(o.data);
  } else if (!o.config.empty()) {
    const RunConfig cfg = load_config(o);
    data = gen_task(cfg.task, cfg.task_seed()).target_train;
    tau = cfg.finetune.tau;
  } else {
    throw ConfigError("mask-report needs --data or --config");
  }
  if (data.dim() != pre.input_dim())
    throw InputError("data width " + std::to_string(data.dim()) + " does not match checkpoint input " +
                     std::to_string(pre.input_dim()));
  const MaskVariant variant = parse_variant(o.variant);
  const MaskData mask_data{data.x, data.y};
  const GradientMaskSet masks = compute_mask_set(pre, mask_data, o.k, variant, tau);
  const GradientSet grads = scl_gradient(pre, mask_data, tau);

  json table = json::array();
  std::printf("%-6s %-10s %-11s %12s %12s %14s %14s %14s", "layer", "role", "shape", "row_bits",
              "sparse_bits", "dense_bits", "objective", "retained");
  if (o.verify_oracle) std::printf(" %12s", "oracle_gap");
  std::printf("\n");
  for (std::size_t l = 0; l < pre.layers.size(); ++l) {
    const auto& layer = pre.layers[l];
    if (layer.role == Role::head) continue;
    const auto& h = grads.layers[l].weight;
    const std::size_t rows = h.rows(), cols = h.cols();
    const std::uint64_t row_bits = o.k * ceil_log2(rows);
    const std::uint64_t sparse_bits = rows * o.k * ceil_log2(cols);
    const std::uint64_t dense_bits = rows * cols;
    const double objective = mask_objective(h, masks.layers[l]);
    const double retained = retained_energy(h, masks.layers[l]);
    json entry{{"layer", l},
               {"role", std::string(to_string(layer.role))},
               {"shape", {rows, cols}},
               {"row_bits", row_bits},
               {"sparse_bits", sparse_bits},
               {"dense_bits", dense_bits},
               {"mask_bits", storage_bits(masks.layers[l])},
               {"objective", objective},
               {"retained_energy", retained}};
    char shape[32];
    std::snprintf(shape, sizeof shape, "%zux%zu", rows, cols);
    std::printf("%-6zu %-10s %-11s %12llu %12llu %14llu %14.6e %14.6e", l,
                std::string(to_string(layer.role)).c_str(), shape,
                static_cast<unsigned long long>(row_bits), static_cast<unsigned long long>(sparse_bits),
                static_cast<unsigned long long>(dense_bits), objective, retained);
    if (o.verify_oracle) {
      if (variant != MaskVariant::row && variant != MaskVariant::col)
        throw ConfigError("--verify-oracle needs variant row or col");
      const bool by_rows = variant == MaskVariant::row;
      const std::size_t extent = by_rows ? rows : cols;
      if (extent > kBruteForceMaxRows)
        throw ConfigError("--verify-oracle: layer " + std::to_string(l) + " has " +
                          std::to_string(extent) + " candidates, above the oracle limit " +
                          std::to_string(kBruteForceMaxRows));
      const LayerMask oracle = by_rows
                                   ? LayerMask(rows, cols, RowIndices{brute_force_best_rows(h, o.k)})
                                   : LayerMask(rows, cols, ColIndices{brute_force_best_cols(h, o.k)});
      const double gap = objective - mask_objective(h, oracle);
      entry["oracle_gap"] = gap;
      std::printf(" %12.3e", gap);
    }
    std::printf("\n");
    table.push_back(entry);
  }
  json doc = masks_to_json(masks);
  doc["report"] = {{"k", o.k}, {"variant", o.variant}, {"tau", tau}, {"layers", table}};
  write_json_file(doc, o.out);
  return kExitOk;
}

int cmd_ablate(const Options& o) {
  const RunConfig cfg = load_config(o);
  const AblationAxis axis = parse_axis(o.axis);
  if (o.values.empty()) throw ConfigError("ablate needs --values");
  const TaskPair task = gen_task(cfg.task, cfg.task_seed());
  const ModelParams pre = o.checkpoint.empty() ? pretrain(task, cfg.pretrain) : load_checkpoint(o.checkpoint);
  const auto reports = ablate(pre, task, cfg.finetune, axis, o.values);

  const fs::path dir(o.out);
  fs::create_directories(dir);
  std::ofstream csv(dir / "ablation.csv");
  if (!csv) throw InputError("cannot write " + (dir / "ablation.csv").string());
  csv << "axis,value,variant,final_accuracy,trainable_fraction,trainable_params,total_params,"
         "storage_bits\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    require_finite_report(r);
    const auto run_cfg = apply_axis(cfg.finetune, axis, o.values[i]);
    RunConfig echo = cfg;
    echo.finetune = run_cfg;
    const fs::path path = dir / ("run_" + std::to_string(i) + ".json");
    write_json_file({{"axis", std::string(to_string(axis))},
                     {"value", o.values[i]},
                     {"config", to_json(echo)},
                     {"report", report_to_json(r)}},
                    path);
    char line[256];
    std::snprintf(line, sizeof line, "%s,%s,%s,%.17g,%.17g,%zu,%zu,%llu\n",
                  std::string(to_string(axis)).c_str(), o.values[i].c_str(), r.variant.c_str(),
                  r.final_accuracy, r.trainable_fraction, r.trainable_params, r.total_params,
                  static_cast<unsigned long long>(r.storage_bits));
    csv << line;
    std::printf("ablate %s=%s: accuracy %.4f, trainable %.2f%%\n", std::string(to_string(axis)).c_str(),
                o.values[i].c_str(), r.final_accuracy, 100.0 * r.trainable_fraction);
  }
  if (!csv) throw InputError("failed writing ablation.csv");
  return kExitOk;
}

template <class F>
int run_guarded(F&& f) {
  try {
    return f();
  } catch (const NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumeric;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const InputError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const GuardError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitOther;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gradient-selected row/column fine-tuning with pull-to-pretrained regularization"};
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed = 0;

  auto add_seed = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "Override the config seed");
  };

  auto* pre = app.add_subcommand("pretrain", "Train the source model and write a checkpoint");
  pre->add_option("--config", o.config, "Run config (JSON)")->required();
  pre->add_option("--out", o.out, "Checkpoint path")->required();
  add_seed(pre);

  auto* ft = app.add_subcommand("finetune", "Compute masks and fine-tune on the target task");
  ft->add_option("--config", o.config, "Run config (JSON)")->required();
  ft->add_option("--checkpoint", o.checkpoint, "Pretrained checkpoint")->required();
  ft->add_option("--out", o.out, "Report path (.json; .csv and .masks.json written alongside)")->required();
  ft->add_option("--baseline", o.baseline, "Run a baseline instead: full | linear");
  add_seed(ft);

  auto* mr = app.add_subcommand("mask-report", "Masks, storage costs and objectives for a checkpoint");
  mr->add_option("--checkpoint", o.checkpoint, "Checkpoint")->required();
  mr->add_option("--out", o.out, "Mask JSON path")->required();
  mr->add_option("--data", o.data, "Mask data (CSV: y,x0,...)");
  mr->add_option("--config", o.config, "Run config; its target training set is the mask data");
  mr->add_option("--k", o.k, "Rows/cols per layer");
  mr->add_option("--variant", o.variant, "row | col | sparse | full");
  mr->add_option("--tau", o.tau, "SCL temperature when --data is used");
  mr->add_flag("--verify-oracle", o.verify_oracle, "Compare against exhaustive search");
  add_seed(mr);

  auto* ab = app.add_subcommand("ablate", "Sweep one fine-tuning setting");
  ab->add_option("--config", o.config, "Run config (JSON)")->required();
  ab->add_option("--axis", o.axis, "k | lambda | regular_blocks | subsets_n | variant | norm")->required();
  ab->add_option("--values", o.values, "Comma-separated values")->required()->delimiter(',');
  ab->add_option("--out", o.out, "Output directory")->required();
  ab->add_option("--checkpoint", o.checkpoint, "Pretrained checkpoint (pretrains from config if absent)");
  add_seed(ab);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }
  for (auto* sub : {pre, ft, mr, ab})
    if (sub->parsed() && sub->count("--seed") > 0) o.seed = seed;

  if (pre->parsed()) return run_guarded([&] { return cmd_pretrain(o); });
  if (ft->parsed()) return run_guarded([&] { return cmd_finetune(o); });
  if (mr->parsed()) return run_guarded([&] { return cmd_mask_report(o); });
  if (ab->parsed()) return run_guarded([&] { return cmd_ablate(o); });
  return kExitOther;
}
