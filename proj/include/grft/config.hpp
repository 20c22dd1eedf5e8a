#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "grft/data.hpp"
#include "grft/harness.hpp"
#include "grft/io.hpp"

namespace grft {

// Full experiment description read from a JSON config. Every randomness
// source derives from `seed`. Missing keys take the defaults below; unknown
// keys and wrongly typed values are ConfigErrors naming the field.
//
// {
//   "seed": 7,
//   "task": {"dim", "classes", "per_class", "test_per_class", "noise_sigma",
//            "rotation", "offset"},
//   "model": {"hidden": [32, 32]},
//   "pretrain": {"epochs", "batch_size", "lr", "warmup_epochs",
//                "beta1", "beta2", "epsilon"},
//   "finetune": {"variant", "k", "tau", "subsets", "epochs", "warmup_epochs",
//                "batch_size", "lr", "beta1", "beta2", "epsilon",
//                "reg": {"lambda", "norm", "last_l", "embedding", "head"}}
// }
struct RunConfig {
  std::uint64_t seed = 0;
  TaskConfig task;
  std::vector<std::size_t> hidden{32, 32};
  PretrainConfig pretrain;
  FineTuneConfig finetune;

  // Re-derives every component seed from `seed`.
  void set_seed(std::uint64_t s);
  std::uint64_t task_seed() const noexcept;
  std::vector<std::size_t> dims() const;
};

RunConfig default_run_config();
RunConfig parse_run_config(const json& j);
RunConfig load_run_config(const std::filesystem::path& path);
json to_json(const RunConfig& cfg);

}  // namespace grft
