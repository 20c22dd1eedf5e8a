#include <doctest.h>

#include <cmath>
#include <numeric>

#include "grft/error.hpp"
#include "grft/losses.hpp"
#include "grft/numeric.hpp"
#include "test_support.hpp"

using namespace grft;

TEST_CASE("cross_entropy examples") {
  const auto u = cross_entropy(Matrix(3, 4, 0.7), Labels{0, 1, 3});
  CHECK(u.loss == doctest::Approx(std::log(4.0)).epsilon(1e-14));

  const auto sharp = cross_entropy(Matrix{{1000.0, 0.0, 0.0}}, Labels{0});
  CHECK(sharp.loss < 1e-6);

  // ln(1 + e^-1), evaluated with mpmath to 20 digits.
  const auto hand = cross_entropy(Matrix{{1.0, 2.0}}, Labels{1});
  CHECK(hand.loss == doctest::Approx(0.31326168751822283405).epsilon(1e-14));

  CHECK_THROWS_AS(cross_entropy(Matrix(2, 3), Labels{0, 3}), InputError);
  CHECK_THROWS_AS(cross_entropy(Matrix(2, 3), Labels{0}), InputError);
}

TEST_CASE("scl_loss examples") {
  CHECK(scl_loss(Matrix{{0.3, 0.4}, {0.3, 0.4}}, Labels{2, 2}, 1.0).loss == 0.0);
  CHECK(scl_loss(Matrix{{1, 0}, {0, 1}, {1, 1}}, Labels{0, 1, 2}, 0.5).loss == 0.0);

  // z = [1,0], [0.6,0.8], [0,1]; mpmath value of the defining formula.
  const Matrix f{{2, 0}, {0.3, 0.4}, {0, 3}};
  const Labels y{0, 0, 1};
  const double expected = 1.1762977197379839037;
  CHECK(scl_loss(f, y, 0.5).loss == doctest::Approx(expected).epsilon(1e-13));
  CHECK(testing::reference_scl(f, y, 0.5) == doctest::Approx(expected).epsilon(1e-13));

  CHECK_THROWS_AS(scl_loss(Matrix{{1, 0}}, Labels{0}, 1.0), InputError);
  CHECK_THROWS_AS(scl_loss(f, y, 0.0), ConfigError);
  CHECK_THROWS_AS(scl_loss(f, y, -1.0), ConfigError);
}

TEST_CASE("scl_loss agrees with the plain-loop definition") {
  Rng rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 2 + rng.below(10), d = 1 + rng.below(6);
    const Matrix f = testing::random_matrix(n, d, rng);
    const Labels y = testing::random_labels(n, 1 + rng.below(3), rng);
    const double tau = 0.05 + rng.uniform();
    CHECK(testing::rel_err(scl_loss(f, y, tau).loss, testing::reference_scl(f, y, tau), 1e-12) < 1e-10);
  }
}

TEST_CASE("scl_loss ignores positive row scaling") {
  Rng rng(22);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 2 + rng.below(8), d = 2 + rng.below(5);
    Matrix f = testing::random_matrix(n, d, rng);
    const Labels y = testing::random_labels(n, 3, rng);
    const double base = scl_loss(f, y, 0.2).loss;
    for (std::size_t i = 0; i < n; ++i) {
      const double s = std::exp(2.0 * rng.normal());
      for (double& v : f.row(i)) v *= s;
    }
    CHECK(std::abs(scl_loss(f, y, 0.2).loss - base) <= 1e-10 * std::max(1.0, std::abs(base)));
  }
}

TEST_CASE("scl_loss is exactly permutation equivariant") {
  Rng rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 2 + rng.below(12), d = 1 + rng.below(6);
    const Matrix f = testing::random_matrix(n, d, rng);
    const Labels y = testing::random_labels(n, 3, rng);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(perm));
    Matrix pf(n, d);
    Labels py(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < d; ++k) pf(i, k) = f(perm[i], k);
      py[i] = y[perm[i]];
    }
    CHECK(scl_loss(pf, py, 0.3).loss == scl_loss(f, y, 0.3).loss);
  }
}

TEST_CASE("loss gradients match finite differences") {
  Rng rng(24);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng.below(7), c = 2 + rng.below(5);
    const Matrix logits = testing::random_matrix(n, c, rng, 2.0);
    const Labels y = testing::random_labels(n, c, rng);
    const Matrix fd = finite_diff_grad([&](const Matrix& z) { return cross_entropy(z, y).loss; },
                                       logits, 1e-5);
    CHECK(testing::max_rel_err(cross_entropy(logits, y).grad, fd) < 1e-4);

    const Matrix feats = testing::random_matrix(n, 1 + rng.below(6), rng);
    const Labels sy = testing::random_labels(n, 2, rng);
    const double tau = 0.1 + rng.uniform();
    const Matrix sfd =
        finite_diff_grad([&](const Matrix& z) { return scl_loss(z, sy, tau).loss; }, feats, 1e-5);
    CHECK(testing::max_rel_err(scl_loss(feats, sy, tau).grad, sfd) < 1e-4);
  }
}

namespace {

ModelParams single_layer(Matrix w, std::vector<double> b) {
  ModelParams m;
  m.layers.push_back({std::move(w), std::move(b), Role::head, Activation::identity});
  return m;
}

}  // namespace

TEST_CASE("reg_penalty examples") {
  Rng rng(25);
  const ModelParams m = testing::random_model({3, 4, 2}, rng);
  RegConfig all{0.7, NormKind::l2, RegularSet{2, true, true}};
  const auto same = reg_penalty(m, m, all);
  CHECK(same.loss == 0.0);
  for (const auto& l : same.grad.layers)
    for (double v : l.weight.data()) CHECK(v == 0.0);

  const ModelParams other = testing::random_model({3, 4, 2}, rng);
  RegConfig off = all;
  off.lambda = 0.0;
  CHECK(reg_penalty(m, other, off).loss == 0.0);
  RegConfig none = all;
  none.norm = NormKind::none;
  CHECK(reg_penalty(m, other, none).loss == 0.0);

  const ModelParams a = single_layer(Matrix::identity(2), {0, 0});
  const ModelParams pre = single_layer(Matrix(2, 2), {0, 0});
  const auto hand = reg_penalty(a, pre, RegConfig{0.5, NormKind::l2, RegularSet{0, false, true}});
  CHECK(hand.loss == 1.0);
  CHECK(hand.grad.layers[0].weight == Matrix::identity(2));

  const ModelParams wide = testing::random_model({3, 5, 2}, rng);
  CHECK_THROWS_AS(reg_penalty(m, wide, all), ShapeError);
}

TEST_CASE("regular set membership") {
  const ModelParams m = init_model(std::vector<std::size_t>{4, 5, 5, 5, 3}, 1);
  auto members = [&](RegularSet s) {
    std::vector<int> in;
    for (std::size_t l = 0; l < m.layers.size(); ++l) in.push_back(s.contains(m, l) ? 1 : 0);
    return in;
  };
  CHECK(members({0, false, false}) == std::vector<int>{0, 0, 0, 0});
  CHECK(members({1, false, false}) == std::vector<int>{0, 0, 1, 0});
  CHECK(members({2, false, true}) == std::vector<int>{0, 1, 1, 1});
  CHECK(members({1, true, true}) == std::vector<int>{1, 0, 1, 1});
  CHECK(members({3, false, false}) == std::vector<int>{1, 1, 1, 0});
  CHECK_THROWS_AS(validate(RegConfig{1.0, NormKind::l2, RegularSet{5, false, false}}, m), ConfigError);
  CHECK_THROWS_AS(validate(RegConfig{-1.0, NormKind::l2, RegularSet{}}, m), ConfigError);
}

TEST_CASE("l2 penalty equals lambda times summed squared distances exactly") {
  Rng rng(26);
  const ModelParams m = testing::random_model({3, 6, 4, 2}, rng);
  const ModelParams pre = testing::random_model({3, 6, 4, 2}, rng);
  const RegConfig cfg{0.37, NormKind::l2, RegularSet{1, true, true}};
  double total = 0.0;
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    if (!cfg.set.contains(m, l)) continue;
    Matrix diff = m.layers[l].weight;
    for (std::size_t i = 0; i < diff.size(); ++i) diff.data()[i] -= pre.layers[l].weight.data()[i];
    total += frobenius_sq(diff);
    double b = 0.0;
    for (std::size_t i = 0; i < m.layers[l].bias.size(); ++i) {
      const double d = m.layers[l].bias[i] - pre.layers[l].bias[i];
      b += d * d;
    }
    total += b;
  }
  CHECK(reg_penalty(m, pre, cfg).loss == cfg.lambda * total);
}

TEST_CASE("reg penalty gradients match finite differences") {
  Rng rng(27);
  for (auto norm : {NormKind::l2, NormKind::l1}) {
    for (int trial = 0; trial < 10; ++trial) {
      const ModelParams m = testing::random_model({3, 4, 3}, rng);
      const ModelParams pre = testing::random_model({3, 4, 3}, rng);
      const RegConfig cfg{0.1 + rng.uniform(), norm, RegularSet{1, true, true}};
      const auto reg = reg_penalty(m, pre, cfg);
      for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const Matrix fd = finite_diff_grad(
            [&](const Matrix& w) {
              ModelParams probe = m;
              probe.layers[l].weight = w;
              return reg_penalty(probe, pre, cfg).loss;
            },
            m.layers[l].weight, 1e-5);
        CHECK(testing::max_rel_err(reg.grad.layers[l].weight, fd) < 1e-4);
      }
    }
  }
}

TEST_CASE("l1 sign at zero difference is zero") {
  const ModelParams a = single_layer(Matrix{{1.0, 2.0}}, {0.5});
  const ModelParams pre = single_layer(Matrix{{1.0, 1.0}}, {1.0});
  const auto r = reg_penalty(a, pre, RegConfig{2.0, NormKind::l1, RegularSet{0, false, true}});
  CHECK(r.loss == 2.0 * (0.0 + 1.0 + 0.5));
  CHECK(r.grad.layers[0].weight == Matrix{{0.0, 2.0}});
  CHECK(r.grad.layers[0].bias == std::vector<double>{-2.0});
}

TEST_CASE("combined_grad examples") {
  Rng rng(28);
  const ModelParams m = testing::random_model({4, 6, 3}, rng);
  const ModelParams pre = testing::random_model({4, 6, 3}, rng);
  const Matrix x = testing::random_matrix(5, 4, rng);
  const Labels y = testing::random_labels(5, 3, rng);

  const auto fwd = forward(m, x);
  const auto ce = cross_entropy(fwd.logits, y);
  const auto ce_grad = backward_from_logits(m, fwd.cache, ce.grad);

  const auto plain = combined_grad(m, pre, Batch{x, y}, RegConfig{0.0, NormKind::l2, {1, true, true}});
  CHECK(plain.loss_r == ce.loss);
  for (std::size_t l = 0; l < m.layers.size(); ++l) CHECK(plain.grad.layers[l].weight == ce_grad.layers[l].weight);

  // Exact additivity of the two parts.
  const RegConfig cfg{0.3, NormKind::l2, RegularSet{1, true, true}};
  const auto both = combined_grad(m, pre, Batch{x, y}, cfg);
  const auto reg = reg_penalty(m, pre, cfg);
  CHECK(both.loss_r == ce.loss + reg.loss);
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    for (std::size_t i = 0; i < both.grad.layers[l].weight.size(); ++i)
      CHECK(both.grad.layers[l].weight.data()[i] ==
            ce_grad.layers[l].weight.data()[i] + reg.grad.layers[l].weight.data()[i]);
    for (std::size_t i = 0; i < both.grad.layers[l].bias.size(); ++i)
      CHECK(both.grad.layers[l].bias[i] == ce_grad.layers[l].bias[i] + reg.grad.layers[l].bias[i]);
  }

  // Zero inputs with balanced labels give an exactly zero data gradient.
  ModelParams lin = single_layer(testing::random_matrix(2, 3, rng), {0.0, 0.0});
  const ModelParams lin_pre = single_layer(testing::random_matrix(2, 3, rng), {0.0, 0.0});
  const Matrix zx(2, 3);
  const Labels zy{0, 1};
  const RegConfig head_only{0.8, NormKind::l2, RegularSet{0, false, true}};
  const auto only_reg = combined_grad(lin, lin_pre, Batch{zx, zy}, head_only);
  const auto r = reg_penalty(lin, lin_pre, head_only);
  CHECK(only_reg.grad.layers[0].weight == r.grad.layers[0].weight);
  CHECK(only_reg.grad.layers[0].bias == r.grad.layers[0].bias);
}

TEST_CASE("combined_grad matches finite differences of L_R") {
  Rng rng(29);
  int checked = 0;
  while (checked < 8) {
    const ModelParams m = testing::random_model({3, 5, 4, 3}, rng);
    const ModelParams pre = testing::random_model({3, 5, 4, 3}, rng);
    const Matrix x = testing::random_matrix(6, 3, rng);
    const Labels y = testing::random_labels(6, 3, rng);
    if (testing::relu_margin(m, x) < 1e-3) continue;
    ++checked;
    const RegConfig cfg{0.05, NormKind::l2, RegularSet{1, true, true}};
    const auto obj = combined_grad(m, pre, Batch{x, y}, cfg);
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
      const Matrix fd = finite_diff_grad(
          [&](const Matrix& w) {
            ModelParams probe = m;
            probe.layers[l].weight = w;
            return combined_grad(probe, pre, Batch{x, y}, cfg).loss_r;
          },
          m.layers[l].weight, 1e-5);
      CHECK(testing::max_rel_err(obj.grad.layers[l].weight, fd) < 1e-4);
    }
  }
}
