#include "grft/io.hpp"

#include <cstdio>
#include <fstream>

#include "grft/error.hpp"

namespace grft {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

// Wraps nlohmann type errors so callers see an InputError with context.
template <class F>
auto guarded(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw InputError(std::string(what) + ": " + e.what());
  }
}

}  // namespace

json model_to_json(const ModelParams& model) {
  json j;
  j["dims"] = model.dims();
  json roles = json::array();
  for (auto r : model.roles()) roles.push_back(std::string(to_string(r)));
  j["roles"] = roles;
  json layers = json::array();
  for (const auto& l : model.layers) {
    json w = json::array();
    for (std::size_t i = 0; i < l.weight.rows(); ++i) {
      const auto row = l.weight.row(i);
      w.push_back(std::vector<double>(row.begin(), row.end()));
    }
    layers.push_back({{"weight", w}, {"bias", l.bias}});
  }
  j["layers"] = layers;
  return j;
}

ModelParams model_from_json(const json& j) {
  return guarded("checkpoint", [&] {
    const auto dims = j.at("dims").get<std::vector<std::size_t>>();
    const auto role_names = j.at("roles").get<std::vector<std::string>>();
    const auto& layers = j.at("layers");
    if (dims.size() < 2 || role_names.size() + 1 != dims.size() || layers.size() + 1 != dims.size())
      throw InputError("checkpoint: dims/roles/layers lengths disagree");
    ModelParams model;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      Layer layer;
      layer.role = parse_role(role_names[l]);
      layer.activation = layer.role == Role::head ? Activation::identity : Activation::relu;
      const auto rows = layers[l].at("weight").get<std::vector<std::vector<double>>>();
      if (rows.size() != dims[l + 1])
        throw InputError("checkpoint: layer " + std::to_string(l) + " has wrong row count");
      std::vector<double> flat;
      flat.reserve(dims[l + 1] * dims[l]);
      for (const auto& r : rows) {
        if (r.size() != dims[l])
          throw InputError("checkpoint: layer " + std::to_string(l) + " has wrong column count");
        flat.insert(flat.end(), r.begin(), r.end());
      }
      layer.weight = Matrix(dims[l + 1], dims[l], std::move(flat));
      layer.bias = layers[l].at("bias").get<std::vector<double>>();
      model.layers.push_back(std::move(layer));
    }
    validate(model);
    return model;
  });
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void write_json_file(const json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << j.dump(1) << '\n';
  if (!out) throw InputError("failed writing " + path.string());
}

void save_checkpoint(const ModelParams& model, const std::filesystem::path& path) {
  write_json_file(model_to_json(model), path);
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  return model_from_json(read_json_file(path));
}

json mask_to_json(const LayerMask& mask) {
  json j;
  j["variant"] = std::string(mask.kind());
  j["shape"] = {mask.rows(), mask.cols()};
  std::visit(overloaded{
                 [&](const RowIndices& s) { j["indices"] = s.indices; },
                 [&](const ColIndices& s) { j["indices"] = s.indices; },
                 [&](const SparsePerNeuron& s) { j["indices"] = s.per_row; },
                 [&](const DenseBits& s) {
                   json rows = json::array();
                   for (std::size_t i = 0; i < mask.rows(); ++i)
                     rows.push_back(std::vector<int>(s.bits.begin() + static_cast<std::ptrdiff_t>(i * mask.cols()),
                                                     s.bits.begin() + static_cast<std::ptrdiff_t>((i + 1) * mask.cols())));
                   j["indices"] = rows;
                 },
                 [&](const FullMask&) { j["indices"] = json::array(); },
             },
             mask.selection());
  j["storage_bits"] = storage_bits(mask);
  return j;
}

LayerMask mask_from_json(const json& j) {
  return guarded("mask", [&] {
    const auto kind = j.at("variant").get<std::string>();
    const auto shape = j.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2) throw InputError("mask: shape must be [rows, cols]");
    const std::size_t rows = shape[0], cols = shape[1];
    const auto& idx = j.at("indices");
    if (kind == "row") return LayerMask(rows, cols, RowIndices{idx.get<IndexSet>()});
    if (kind == "col") return LayerMask(rows, cols, ColIndices{idx.get<IndexSet>()});
    if (kind == "sparse")
      return LayerMask(rows, cols, SparsePerNeuron{idx.get<std::vector<IndexSet>>()});
    if (kind == "dense") {
      DenseBits bits;
      for (const auto& r : idx.get<std::vector<std::vector<int>>>()) {
        if (r.size() != cols) throw InputError("mask: dense row length mismatch");
        for (int b : r) bits.bits.push_back(static_cast<std::uint8_t>(b == 1 ? 1 : (b == 0 ? 0 : 2)));
      }
      return LayerMask(rows, cols, std::move(bits));
    }
    if (kind == "full") return LayerMask::full(rows, cols);
    throw InputError("mask: unknown variant '" + kind + "'");
  });
}

json masks_to_json(const GradientMaskSet& masks) {
  json layers = json::array();
  for (const auto& m : masks.layers) layers.push_back(mask_to_json(m));
  return {{"layers", layers}, {"storage_bits", storage_bits(masks)}};
}

GradientMaskSet masks_from_json(const json& j) {
  return guarded("mask file", [&] {
    GradientMaskSet masks;
    for (const auto& m : j.at("layers")) masks.layers.push_back(mask_from_json(m));
    return masks;
  });
}

json report_to_json(const TrainReport& report) {
  json epochs = json::array();
  for (const auto& e : report.epochs)
    epochs.push_back({{"epoch", e.epoch},
                      {"lr", e.lr},
                      {"loss_R", e.loss_r},
                      {"ce_loss", e.ce_loss},
                      {"test_acc", e.test_acc}});
  return {{"variant", report.variant},
          {"epochs", epochs},
          {"final_accuracy", report.final_accuracy},
          {"trainable_fraction", report.trainable_fraction},
          {"trainable_params", report.trainable_params},
          {"total_params", report.total_params},
          {"storage_bits", report.storage_bits},
          {"layer_distances", report.layer_distances},
          {"mask_subset", report.mask_subset},
          {"subset_losses", report.subset_losses},
          {"wall_seconds", report.wall_seconds}};
}

void write_report_csv(const TrainReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "epoch,lr,loss_R,ce_loss,test_acc\n";
  char buf[160];
  for (const auto& e : report.epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g\n", e.epoch, e.lr, e.loss_r,
                  e.ce_loss, e.test_acc);
    out << buf;
  }
  if (!out) throw InputError("failed writing " + path.string());
}

}  // namespace grft
