#pragma once

#include <filesystem>
#include <span>
#include <string>

#include <json.hpp>

#include "grft/harness.hpp"
#include "grft/masking.hpp"
#include "grft/model.hpp"

namespace grft {

using json = nlohmann::json;

// {"dims": [...], "roles": [...], "layers": [{"weight": [[...]], "bias": [...]}]}
// Doubles are written in shortest round-trip form, so reloading is exact.
json model_to_json(const ModelParams& model);
ModelParams model_from_json(const json& j);
void save_checkpoint(const ModelParams& model, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

// {"variant": "row"|"col"|"sparse"|"dense"|"full", "shape": [r, c],
//  "indices": ..., "storage_bits": n}
// indices: row/col -> [i...], sparse -> [[j...] per row], dense -> [[0/1...]
// per row], full -> [].
json mask_to_json(const LayerMask& mask);
LayerMask mask_from_json(const json& j);
// {"layers": [...], "storage_bits": total}
json masks_to_json(const GradientMaskSet& masks);
GradientMaskSet masks_from_json(const json& j);

json report_to_json(const TrainReport& report);
// epoch,lr,loss_R,ce_loss,test_acc
void write_report_csv(const TrainReport& report, const std::filesystem::path& path);

json read_json_file(const std::filesystem::path& path);
void write_json_file(const json& j, const std::filesystem::path& path);

}  // namespace grft
