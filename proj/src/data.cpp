#include "grft/data.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include "grft/error.hpp"
#include "grft/numeric.hpp"
#include "grft/rng.hpp"

namespace grft {

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.num_classes = num_classes;
  out.x = Matrix(indices.size(), x.cols());
  out.y.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto src = x.row(indices[r]);
    std::copy(src.begin(), src.end(), out.x.row(r).begin());
    out.y.push_back(y[indices[r]]);
  }
  return out;
}

void validate(const Dataset& data) {
  if (data.x.rows() != data.y.size())
    throw InputError("dataset: " + std::to_string(data.y.size()) + " labels for " +
                     std::to_string(data.x.rows()) + " samples");
  for (auto label : data.y)
    if (label >= data.num_classes)
      throw InputError("dataset: label " + std::to_string(label) + " out of range [0, " +
                       std::to_string(data.num_classes) + ")");
  require_finite(data.x.data(), "dataset");
}

namespace {

// Stream ids for Rng::derive.
enum Stream : std::uint64_t {
  kMeans = 1,
  kBasis = 2,
  kOffsets = 3,
  kSource = 4,
  kTargetTrain = 5,
  kTargetTest = 6,
};

void normalize(std::span<double> v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  const double n = std::sqrt(sq);
  for (double& x : v) x /= n;
}

Matrix random_unit_rows(std::size_t rows, std::size_t dim, Rng& rng) {
  Matrix m(rows, dim);
  for (std::size_t i = 0; i < rows; ++i) {
    for (double& v : m.row(i)) v = rng.normal();
    normalize(m.row(i));
  }
  return m;
}

// Rows form an orthonormal basis (Gram-Schmidt on Gaussian vectors).
Matrix random_orthonormal(std::size_t dim, Rng& rng) {
  Matrix q(dim, dim);
  for (std::size_t i = 0; i < dim; ++i) {
    while (true) {
      auto row = q.row(i);
      for (double& v : row) v = rng.normal();
      for (std::size_t p = 0; p < i; ++p) {
        const auto prev = q.row(p);
        double d = 0.0;
        for (std::size_t k = 0; k < dim; ++k) d += row[k] * prev[k];
        for (std::size_t k = 0; k < dim; ++k) row[k] -= d * prev[k];
      }
      double sq = 0.0;
      for (double v : row) sq += v * v;
      if (sq > 1e-6) break;
    }
    normalize(q.row(i));
  }
  return q;
}

// Rotates v by `angle` inside each plane (basis[2p], basis[2p+1]).
void rotate(std::span<double> v, const Matrix& basis, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  const std::size_t dim = v.size();
  std::vector<double> out(v.begin(), v.end());
  for (std::size_t p = 0; p + 1 < dim; p += 2) {
    const auto a = basis.row(p), b = basis.row(p + 1);
    double pa = 0.0, pb = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      pa += v[k] * a[k];
      pb += v[k] * b[k];
    }
    const double ra = c * pa - s * pb, rb = s * pa + c * pb;
    for (std::size_t k = 0; k < dim; ++k) out[k] += (ra - pa) * a[k] + (rb - pb) * b[k];
  }
  std::copy(out.begin(), out.end(), v.begin());
}

Dataset sample_clusters(const Matrix& means, std::size_t per_class, double sigma, Rng& rng) {
  const std::size_t classes = means.rows(), dim = means.cols();
  Dataset d;
  d.num_classes = classes;
  d.x = Matrix(classes * per_class, dim);
  d.y.reserve(classes * per_class);
  std::size_t r = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t s = 0; s < per_class; ++s, ++r) {
      auto row = d.x.row(r);
      const auto mu = means.row(c);
      for (std::size_t k = 0; k < dim; ++k) row[k] = mu[k] + (sigma > 0.0 ? sigma * rng.normal() : 0.0);
      d.y.push_back(c);
    }
  }
  return d;
}

}  // namespace

TaskPair gen_task(const TaskConfig& cfg, std::uint64_t seed) {
  if (cfg.classes < 2) throw ConfigError("task.classes must be >= 2");
  if (cfg.per_class < 2) throw ConfigError("task.per_class must be >= 2");
  if (cfg.test_per_class < 1) throw ConfigError("task.test_per_class must be >= 1");
  if (cfg.dim < 1) throw ConfigError("task.dim must be >= 1");
  if (!(cfg.noise_sigma >= 0.0) || !std::isfinite(cfg.noise_sigma))
    throw ConfigError("task.noise_sigma must be finite and >= 0");
  if (!std::isfinite(cfg.shift.rotation) || !std::isfinite(cfg.shift.offset))
    throw ConfigError("task.shift must be finite");

  TaskPair task;
  task.shift = cfg.shift;
  Rng mean_rng(Rng::derive(seed, kMeans));
  task.source_means = random_unit_rows(cfg.classes, cfg.dim, mean_rng);
  task.target_means = task.source_means;
  if (cfg.shift.rotation != 0.0) {
    Rng basis_rng(Rng::derive(seed, kBasis));
    const Matrix basis = random_orthonormal(cfg.dim, basis_rng);
    for (std::size_t c = 0; c < cfg.classes; ++c)
      rotate(task.target_means.row(c), basis, cfg.shift.rotation);
  }
  if (cfg.shift.offset != 0.0) {
    Rng offset_rng(Rng::derive(seed, kOffsets));
    const Matrix dirs = random_unit_rows(cfg.classes, cfg.dim, offset_rng);
    for (std::size_t c = 0; c < cfg.classes; ++c)
      for (std::size_t k = 0; k < cfg.dim; ++k)
        task.target_means(c, k) += cfg.shift.offset * dirs(c, k);
  }
  Rng src_rng(Rng::derive(seed, kSource));
  Rng train_rng(Rng::derive(seed, kTargetTrain));
  Rng test_rng(Rng::derive(seed, kTargetTest));
  task.source = sample_clusters(task.source_means, cfg.per_class, cfg.noise_sigma, src_rng);
  task.target_train = sample_clusters(task.target_means, cfg.per_class, cfg.noise_sigma, train_rng);
  task.target_test =
      sample_clusters(task.target_means, cfg.test_per_class, cfg.noise_sigma, test_rng);
  return task;
}

std::vector<Dataset> partition_subsets(const Dataset& data, std::size_t n, std::uint64_t seed) {
  const std::size_t total = data.size();
  if (n < 1 || n > total)
    throw ConfigError("subsets n=" + std::to_string(n) + " outside [1, " + std::to_string(total) + "]");
  std::vector<std::size_t> perm(total);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(perm));
  std::vector<Dataset> parts;
  parts.reserve(n);
  const std::size_t base = total / n, extra = total % n;
  std::size_t start = 0;
  for (std::size_t p = 0; p < n; ++p) {
    const std::size_t len = base + (p < extra ? 1 : 0);
    parts.push_back(data.subset(std::span<const std::size_t>(perm).subspan(start, len)));
    start += len;
  }
  return parts;
}

double mean_scl_loss(const ModelParams& model, const Dataset& data, double tau) {
  if (data.size() == 0) throw InputError("mean_scl_loss: empty dataset");
  const auto fwd = forward(model, data.x);
  return scl_loss(fwd.features, data.y, tau).loss / static_cast<double>(data.size());
}

SubsetChoice select_mask_subset(const ModelParams& pre, std::span<const Dataset> subsets,
                                double tau) {
  if (subsets.empty()) throw InputError("select_mask_subset: no subsets");
  SubsetChoice choice;
  choice.losses.reserve(subsets.size());
  for (std::size_t s = 0; s < subsets.size(); ++s) {
    if (subsets[s].size() == 0)
      throw InputError("select_mask_subset: subset " + std::to_string(s) + " is empty");
    choice.losses.push_back(mean_scl_loss(pre, subsets[s], tau));
    if (choice.losses[s] < choice.losses[choice.index]) choice.index = s;
  }
  return choice;
}

void write_dataset_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << 'y';
  for (std::size_t k = 0; k < data.dim(); ++k) out << ",x" << k;
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << data.y[i];
    for (double v : data.x.row(i)) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) throw InputError("failed writing " + path.string());
}

Dataset read_dataset_csv(const std::filesystem::path& path, std::size_t num_classes) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw InputError(path.string() + ": empty file");
  std::size_t dim = 0;
  {
    std::stringstream header(line);
    std::string cell;
    std::getline(header, cell, ',');
    if (cell != "y") throw InputError(path.string() + ": header must start with 'y'");
    while (std::getline(header, cell, ',')) {
      if (cell != "x" + std::to_string(dim))
        throw InputError(path.string() + ": expected column x" + std::to_string(dim));
      ++dim;
    }
  }
  std::vector<double> values;
  Labels labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    std::getline(row, cell, ',');
    std::size_t label = 0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), label);
    if (ec != std::errc() || ptr != cell.data() + cell.size())
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": bad label '" + cell + "'");
    labels.push_back(label);
    std::size_t cols = 0;
    while (std::getline(row, cell, ',')) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw InputError(path.string() + ":" + std::to_string(line_no) + ": bad value '" + cell + "'");
      }
      ++cols;
    }
    if (cols != dim)
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(dim) + " features");
  }
  Dataset d;
  d.x = Matrix(labels.size(), dim, std::move(values));
  std::size_t max_label = 0;
  for (auto l : labels) max_label = std::max(max_label, l);
  d.num_classes = std::max(num_classes, labels.empty() ? 0 : max_label + 1);
  d.y = std::move(labels);
  validate(d);
  return d;
}

}  // namespace grft
