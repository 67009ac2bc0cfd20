#include "ducos/losses.hpp"
#include "oracles.hpp"

#include <doctest.h>

using namespace ducos;

namespace {

Tensor<double> map(Index h, Index w, std::initializer_list<double> v) { return Tensor<double>::from({1, h, w}, v); }

}  // namespace

TEST_CASE("reconstruction loss examples") {
  const auto z = map(2, 2, {1, 2, 3, 4});
  CHECK(loss_rec(z, z).item() == 0);
  CHECK(loss_rec(z + 0.5, z).item() == doctest::Approx(0.5));
  CHECK(loss_rec(map(2, 2, {3, 2, 5, 4}), z).item() == doctest::Approx(1.0));
  // Invalid pixels are ignored.
  const auto zm = map(2, 2, {0, 2, 0, 4});
  CHECK(loss_rec(map(2, 2, {9, 3, -9, 4}), zm).item() == doctest::Approx(0.5));
  CHECK_THROWS(loss_rec(z, Tensor<double>::zeros({1, 2, 2})));
  CHECK_THROWS_AS(loss_rec(z, Tensor<double>::zeros({1, 2, 3})), ShapeError);
}

TEST_CASE("masked pixels contribute zero gradient") {
  auto y = map(2, 3, {1, 2, 3, 4, 5, 6});
  y.set_requires_grad(true);
  const auto z = map(2, 3, {0, 1, 0, 5, 0, 7});
  backward(loss_rec(y, z));
  CHECK(y.grad()[0] == 0);
  CHECK(y.grad()[2] == 0);
  CHECK(y.grad()[4] == 0);
  CHECK(y.grad()[1] == doctest::Approx(1.0 / 3));
  CHECK(y.grad()[3] == doctest::Approx(-1.0 / 3));
}

TEST_CASE("alignment loss examples") {
  const auto h_d = map(2, 2, {0, 1, 0, 1}), h_f = map(2, 2, {0, 0, 1, 1});
  CHECK(loss_cf(h_d, h_f).item() == doctest::Approx(0.5));
  CHECK(loss_cf(h_d, h_d).item() == 0);
  CHECK(loss_cf(h_d + 0.1, h_d).item() == doctest::Approx(0.01));

  std::vector<FusionTrace<double>> traces(4);
  for (int i = 0; i < 4; ++i) {
    traces[static_cast<std::size_t>(i)].h_d = h_d;
    traces[static_cast<std::size_t>(i)].h_f = i == 0 ? h_f : h_d;
  }
  CHECK(loss_cf(std::span<const FusionTrace<double>>(traces)).item() == doctest::Approx(0.5 / 4));
  traces[3].h_f = {};
  CHECK_THROWS(loss_cf(std::span<const FusionTrace<double>>(traces)));
}

TEST_CASE("gradient loss examples") {
  CHECK(loss_gr(Tensor<double>::constant({1, 4, 4}, 2.0), Tensor<double>::constant({1, 4, 4}, -1.0)).item() < 1e-12);
  std::mt19937_64 rng(1);
  for (int t = 0; t < 20; ++t) {
    const auto y = oracle::random_tensor({1, 6, 9}, rng, 0, 5, false);
    const double a = 0.2 + t, b = t - 3.0;
    CHECK(loss_gr(y, y * a + b).item() < 1e-6);
    CHECK(loss_gr(y, y * a + b, GradientOperator::sobel).item() < 1e-6);
  }
}

TEST_CASE("gradient loss on a strip matches the loop reference") {
  Raster<double> step(1, 8), ramp(1, 8);
  for (Index j = 0; j < 8; ++j) {
    step(0, j) = j < 4 ? 1.0 : 3.0;
    ramp(0, j) = 0.25 * static_cast<double>(j);
  }
  double ref = 0;
  const auto gs = oracle::gradient_magnitude(oracle::minmax(step));
  const auto gr = oracle::gradient_magnitude(oracle::minmax(ramp));
  for (Index j = 0; j < 8; ++j) ref += std::abs(gs(0, j) - gr(0, j));
  ref /= 8;
  CHECK(loss_gr(to_tensor(step), to_tensor(ramp)).item() == doctest::Approx(ref).epsilon(1e-9));
  CHECK(std::abs(loss_gr(to_tensor(step), to_tensor(ramp)).item() - ref) < 1e-6);
}

TEST_CASE("lagrangian examples and linearity") {
  const auto r = Tensor<double>::scalar(1), c = Tensor<double>::scalar(0.5), g = Tensor<double>::scalar(0.2);
  CHECK(lagrangian_total(r, c, g, 0.01, 0.05).item() == doctest::Approx(1.015).epsilon(1e-12));
  CHECK(lagrangian_total(r, c, g, 0, 0).item() == 1.0);
  CHECK(lagrangian_total(r, {}, {}, 3, 3).item() == 1.0);
  const double once = lagrangian_total(r, c, g, 0.3, 0).item() - 1.0;
  const double twice = lagrangian_total(r, c, g, 0.6, 0).item() - 1.0;
  CHECK(twice == doctest::Approx(2 * once));
  CHECK_THROWS(lagrangian_total(r, c, g, -0.1, 0));
  CHECK_THROWS(lagrangian_total(r, c, g, 0, -0.1));
}

TEST_CASE("lagrangian gradient is the weighted sum of term gradients") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 10; ++t) {
    const auto z = oracle::random_tensor({1, 5, 6}, rng, 0.5, 2, false);
    const auto yp = oracle::random_tensor({1, 5, 6}, rng, 0, 1, false);
    const auto hf = oracle::random_tensor({1, 5, 6}, rng, 0, 1, false);
    const auto y0 = oracle::random_tensor({1, 5, 6}, rng, 0.5, 2, false);
    auto grad_of = [&](int term, double lambda, double mu) {
      Tensor<double> y = y0.detach();
      y.set_requires_grad(true);
      const auto rec = loss_rec(y, z);
      const auto cf = loss_cf(y * 0.5, hf);
      const auto gr = loss_gr(y, yp);
      Tensor<double> loss = term == 0 ? rec : term == 1 ? cf : term == 2 ? gr : lagrangian_total(rec, cf, gr, lambda, mu);
      backward(loss);
      return Vec<double>(y.grad());
    };
    const double lambda = 0.3 * t, mu = 0.1 + t;
    const Vec<double> total = grad_of(3, lambda, mu);
    const Vec<double> parts = grad_of(0, 0, 0) + lambda * grad_of(1, 0, 0) + mu * grad_of(2, 0, 0);
    CHECK(((total - parts).abs() < 1e-6).all());
  }
}

TEST_CASE("losses pass finite differences and are nonnegative") {
  for (int t = 0; t < 20; ++t) {
    std::mt19937_64 rng(40 + t);
    const auto z = oracle::random_tensor({1, 5, 5}, rng, 0.5, 2, false);
    const auto yp = oracle::random_tensor({1, 5, 5}, rng, 0, 1, false);
    std::vector<Tensor<double>> in{oracle::random_tensor({1, 5, 5}, rng, 0.5, 2), oracle::random_tensor({1, 5, 5}, rng, 0, 1)};
    DetachedStatsScope scope;
    bool recorded = false;
    const double e = oracle::gradient_error(in, [&](const std::vector<Tensor<double>>& v) {
      if (recorded) scope.replay();
      recorded = true;
      const auto rec = loss_rec(v[0], z);
      const auto cf = loss_cf(v[1], yp);
      const auto gr = loss_gr(v[0], yp);
      CHECK(rec.item() >= 0);
      CHECK(cf.item() >= 0);
      CHECK(gr.item() >= 0);
      return lagrangian_total(rec, cf, gr, 0.7, 0.3);
    });
    CHECK(e <= 1e-4);
  }
}
