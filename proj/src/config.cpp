#include "grft/config.hpp"

#include <fstream>
#include <set>
#include <string>

#include "grft/error.hpp"
#include "grft/rng.hpp"

namespace grft {

namespace {

enum Stream : std::uint64_t { kTask = 1, kPretrain = 2, kFinetune = 3 };

// Reads typed fields out of one JSON object and rejects leftovers.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "config must be an object" : path_ + " must be an object");
  }

  template <class T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("invalid value for '" + field(key) + "'");
    }
  }

  void read_count(const char* key, std::size_t& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0)
      throw ConfigError("'" + field(key) + "' must be a non-negative integer");
    out = v.get<std::size_t>();
  }

  void read_real(const char* key, double& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number()) throw ConfigError("'" + field(key) + "' must be a number");
    out = v.get<double>();
  }

  bool has(const char* key) const { return j_.contains(key); }
  Section child(const char* key) {
    seen_.insert(key);
    return Section(j_.at(key), field(key));
  }

  void finish() const {
    for (const auto& [key, _] : j_.items())
      if (!seen_.count(key)) throw ConfigError("unknown config key '" + field(key) + "'");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_optim(Section& s, OptimConfig& o) {
  s.read_real("lr", o.base_lr);
  s.read_count("warmup_epochs", o.warmup_epochs);
  s.read_real("beta1", o.beta1);
  s.read_real("beta2", o.beta2);
  s.read_real("epsilon", o.epsilon);
}

}  // namespace

void RunConfig::set_seed(std::uint64_t s) {
  seed = s;
  pretrain.seed = Rng::derive(s, kPretrain);
  finetune.seed = Rng::derive(s, kFinetune);
}

std::uint64_t RunConfig::task_seed() const noexcept { return Rng::derive(seed, kTask); }

std::vector<std::size_t> RunConfig::dims() const {
  std::vector<std::size_t> d{task.dim};
  d.insert(d.end(), hidden.begin(), hidden.end());
  d.push_back(task.classes);
  return d;
}

RunConfig default_run_config() {
  RunConfig cfg;
  cfg.task = TaskConfig{};
  cfg.pretrain.epochs = 50;
  cfg.pretrain.batch_size = 32;
  cfg.pretrain.optim.base_lr = 1e-2;
  cfg.pretrain.optim.warmup_epochs = 5;
  cfg.finetune.optim.base_lr = 1e-2;
  cfg.finetune.optim.warmup_epochs = 10;
  cfg.finetune.optim.total_epochs = 100;
  cfg.finetune.reg = RegConfig{1e-4, NormKind::l2, RegularSet{1, true, true}};
  cfg.set_seed(0);
  cfg.pretrain.dims = cfg.dims();
  return cfg;
}

RunConfig parse_run_config(const json& j) {
  RunConfig cfg = default_run_config();
  Section root(j, "");
  std::uint64_t seed = 0;
  if (root.has("seed")) {
    const auto& v = j.at("seed");
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
      throw ConfigError("'seed' must be a non-negative integer");
    seed = v.get<std::uint64_t>();
  }
  root.read("seed", seed);

  if (root.has("task")) {
    auto t = root.child("task");
    t.read_count("dim", cfg.task.dim);
    t.read_count("classes", cfg.task.classes);
    t.read_count("per_class", cfg.task.per_class);
    t.read_count("test_per_class", cfg.task.test_per_class);
    t.read_real("noise_sigma", cfg.task.noise_sigma);
    t.read_real("rotation", cfg.task.shift.rotation);
    t.read_real("offset", cfg.task.shift.offset);
    t.finish();
  }
  if (root.has("model")) {
    auto m = root.child("model");
    m.read("hidden", cfg.hidden);
    m.finish();
  }
  if (root.has("pretrain")) {
    auto p = root.child("pretrain");
    p.read_count("epochs", cfg.pretrain.epochs);
    p.read_count("batch_size", cfg.pretrain.batch_size);
    read_optim(p, cfg.pretrain.optim);
    p.finish();
  }
  if (root.has("finetune")) {
    auto f = root.child("finetune");
    std::string variant(to_string(cfg.finetune.variant));
    f.read("variant", variant);
    try {
      cfg.finetune.variant = parse_variant(variant);
    } catch (const ConfigError&) {
      throw ConfigError("invalid value for 'finetune.variant': '" + variant + "'");
    }
    f.read_count("k", cfg.finetune.k);
    f.read_real("tau", cfg.finetune.tau);
    f.read_count("subsets", cfg.finetune.subsets_n);
    f.read_count("epochs", cfg.finetune.optim.total_epochs);
    f.read_count("batch_size", cfg.finetune.batch_size);
    read_optim(f, cfg.finetune.optim);
    if (f.has("reg")) {
      auto r = f.child("reg");
      r.read_real("lambda", cfg.finetune.reg.lambda);
      std::string norm(to_string(cfg.finetune.reg.norm));
      r.read("norm", norm);
      try {
        cfg.finetune.reg.norm = parse_norm(norm);
      } catch (const ConfigError&) {
        throw ConfigError("invalid value for 'finetune.reg.norm': '" + norm + "'");
      }
      r.read_count("last_l", cfg.finetune.reg.set.last_l);
      r.read("embedding", cfg.finetune.reg.set.include_embedding);
      r.read("head", cfg.finetune.reg.set.include_head);
      r.finish();
    }
    f.finish();
  }
  root.finish();

  cfg.set_seed(seed);
  cfg.pretrain.dims = cfg.dims();

  // Validation that needs no compute.
  for (std::size_t h : cfg.hidden)
    if (h == 0) throw ConfigError("'model.hidden' entries must be positive");
  if (cfg.task.classes < 2) throw ConfigError("'task.classes' must be >= 2");
  if (cfg.task.per_class < 2) throw ConfigError("'task.per_class' must be >= 2");
  if (cfg.task.dim < 1) throw ConfigError("'task.dim' must be >= 1");
  if (cfg.pretrain.batch_size == 0) throw ConfigError("'pretrain.batch_size' must be positive");
  if (cfg.finetune.batch_size == 0) throw ConfigError("'finetune.batch_size' must be positive");
  if (!(cfg.finetune.tau > 0.0)) throw ConfigError("'finetune.tau' must be positive");
  if (cfg.finetune.reg.lambda < 0.0) throw ConfigError("'finetune.reg.lambda' must be >= 0");
  if (cfg.pretrain.epochs > 0) {
    OptimConfig o = cfg.pretrain.optim;
    o.total_epochs = cfg.pretrain.epochs;
    try {
      validate(o);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("pretrain: ") + e.what());
    }
  }
  try {
    validate(cfg.finetune.optim);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("finetune: ") + e.what());
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream probe(path);
  if (!probe) throw ConfigError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(probe);
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed config " + path.string() + ": " + e.what());
  }
  return parse_run_config(j);
}

json to_json(const RunConfig& cfg) {
  const auto& f = cfg.finetune;
  return {
      {"seed", cfg.seed},
      {"task",
       {{"dim", cfg.task.dim},
        {"classes", cfg.task.classes},
        {"per_class", cfg.task.per_class},
        {"test_per_class", cfg.task.test_per_class},
        {"noise_sigma", cfg.task.noise_sigma},
        {"rotation", cfg.task.shift.rotation},
        {"offset", cfg.task.shift.offset}}},
      {"model", {{"hidden", cfg.hidden}}},
      {"pretrain",
       {{"epochs", cfg.pretrain.epochs},
        {"batch_size", cfg.pretrain.batch_size},
        {"lr", cfg.pretrain.optim.base_lr},
        {"warmup_epochs", cfg.pretrain.optim.warmup_epochs},
        {"beta1", cfg.pretrain.optim.beta1},
        {"beta2", cfg.pretrain.optim.beta2},
        {"epsilon", cfg.pretrain.optim.epsilon}}},
      {"finetune",
       {{"variant", std::string(to_string(f.variant))},
        {"k", f.k},
        {"tau", f.tau},
        {"subsets", f.subsets_n},
        {"epochs", f.optim.total_epochs},
        {"warmup_epochs", f.optim.warmup_epochs},
        {"batch_size", f.batch_size},
        {"lr", f.optim.base_lr},
        {"beta1", f.optim.beta1},
        {"beta2", f.optim.beta2},
        {"epsilon", f.optim.epsilon},
        {"reg",
         {{"lambda", f.reg.lambda},
          {"norm", std::string(to_string(f.reg.norm))},
          {"last_l", f.reg.set.last_l},
          {"embedding", f.reg.set.include_embedding},
          {"head", f.reg.set.include_head}}}}},
  };
}

}  // namespace grft
