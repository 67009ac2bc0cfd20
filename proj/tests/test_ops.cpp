#include "oracles.hpp"

#include <doctest.h>

using namespace ducos;

namespace {

constexpr int kTrials = 20;
constexpr double kTol = 1e-4;

template <typename F>
void check_gradients(const char* name, F make_case) {
  double worst = 0;
  for (int t = 0; t < kTrials; ++t) {
    std::mt19937_64 rng(1000 + t);
    auto [inputs, fn] = make_case(rng, t);
    worst = std::max(worst, oracle::gradient_error(inputs, fn, 1e-5, 200, t));
  }
  INFO(name << " worst relative error " << worst);
  CHECK(worst <= kTol);
}

using Inputs = std::vector<Tensor<double>>;
using Fn = std::function<Tensor<double>(const Inputs&)>;

}  // namespace

TEST_CASE("elementwise examples") {
  const auto a = Tensor<double>::from({2}, {1, 2});
  const auto b = Tensor<double>::from({2}, {3, 4});
  const auto s = add(a, b);
  CHECK(s.at(0) == 4);
  CHECK(s.at(1) == 6);

  const auto alpha = Tensor<double>::from({1}, {0.5});
  const auto f = Tensor<double>::from({1, 1, 2}, {2, 4});
  const auto m = mul(f, alpha);
  CHECK(m.shape() == Shape{1, 1, 2});
  CHECK(m.at(0) == 1);
  CHECK(m.at(1) == 2);

  auto x = Tensor<double>::from({2}, {-3, 3});
  x.set_requires_grad(true);
  const auto y = ducos::abs(x);
  CHECK(y.at(0) == 3);
  CHECK(y.at(1) == 3);
  backward(sum(y));
  CHECK(x.grad()[0] == -1);
  CHECK(x.grad()[1] == 1);
}

TEST_CASE("abs and sqrt conventions at zero") {
  auto x = Tensor<double>::from({2}, {0, 0});
  x.set_requires_grad(true);
  backward(sum(ducos::abs(x) + ducos::sqrt(x)));
  CHECK(x.grad()[0] == 0);
  CHECK(std::isfinite(x.grad()[1]));
}

TEST_CASE("division by zero stays finite") {
  auto a = Tensor<double>::from({2}, {1, 0});
  auto b = Tensor<double>::from({2}, {0, 0});
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  const auto q = a / b;
  CHECK(q.values().allFinite());
  backward(sum(q));
  CHECK(a.grad().allFinite());
  CHECK(b.grad().allFinite());
}

TEST_CASE("per-channel broadcast matches the materialized computation") {
  std::mt19937_64 rng(5);
  const auto x = oracle::random_tensor({3, 4, 5}, rng, -1, 1, false);
  const auto c = oracle::random_tensor({3}, rng, -1, 1, false);
  Vec<double> full(60);
  for (Index k = 0; k < 3; ++k) full.segment(k * 20, 20).setConstant(c.at(k));
  const auto explicit_c = Tensor<double>({3, 4, 5}, full);
  for (auto kind : {BinaryKind::add, BinaryKind::sub, BinaryKind::mul, BinaryKind::div}) {
    const auto lhs = sum(elementwise(kind, x, c), {1, 2});
    const auto rhs = sum(elementwise(kind, x, explicit_c), {1, 2});
    CHECK(((lhs.values() - rhs.values()).abs() < 1e-12).all());
  }
  const auto batched = oracle::random_tensor({2, 3, 2, 2}, rng, -1, 1, false);
  CHECK(mul(batched, c).shape() == batched.shape());
  CHECK_THROWS_AS(mul(x, Tensor<double>::zeros({4})), ShapeError);
  CHECK_THROWS_AS(mul(x, Tensor<double>::zeros({3, 4})), ShapeError);
}

TEST_CASE("sigmoid anchors") {
  const auto s = sigmoid(Tensor<double>::from({3}, {0, 1, -1}));
  CHECK(s.at(0) == 0.5);
  CHECK(s.at(1) == doctest::Approx(0.731059).epsilon(1e-6));
  CHECK(s.at(2) == doctest::Approx(0.268941).epsilon(1e-6));
  CHECK(s.at(1) == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-15));
}

TEST_CASE("reduction examples") {
  const auto v = Tensor<double>::from({3}, {1, 2, 3});
  CHECK(mean(v).item() == 2);
  CHECK(reduce(ReduceKind::std, Tensor<double>::constant({5}, 4.0)).item() == 0);
  CHECK(reduce(ReduceKind::min, v).item() == 1);
  CHECK(reduce(ReduceKind::max, v).item() == 3);
  const auto m = Tensor<double>::from({2, 3}, {1, 2, 3, 4, 5, 6});
  const auto rows = sum(m, {1});
  CHECK(rows.shape() == Shape{2});
  CHECK(rows.at(0) == 6);
  CHECK(rows.at(1) == 15);
  CHECK(mean(m, {0}).at(2) == 4.5);
  CHECK_THROWS_AS(sum(m, {2}), ShapeError);
  CHECK_THROWS_AS(sum(Tensor<double>::zeros({0})), ShapeError);
}

TEST_CASE("min and max are detached") {
  auto x = Tensor<double>::from({3}, {1, 5, 2});
  x.set_requires_grad(true);
  const auto mx = reduce(ReduceKind::max, x);
  CHECK_FALSE(mx.requires_grad());
  backward(sum(x * 0.0 + 1.0) + mx);
  CHECK((x.grad() == 0.0).all());
}

TEST_CASE("std of constant input has zero gradient") {
  auto x = Tensor<double>::constant({4}, 2.0);
  x.set_requires_grad(true);
  backward(reduce(ReduceKind::std, x));
  CHECK((x.grad() == 0.0).all());
}

TEST_CASE("conv2d identity and window-sum examples") {
  std::mt19937_64 rng(2);
  const auto x = oracle::random_tensor({3, 5, 6}, rng, -1, 1, false);
  Vec<double> eye = Vec<double>::Zero(9);
  for (Index i = 0; i < 3; ++i) eye[i * 3 + i] = 1;
  const auto id = conv2d(x, Tensor<double>({3, 3, 1, 1}, eye), Tensor<double>());
  CHECK((id.values() == x.values()).all());

  const auto c = Tensor<double>::constant({1, 6, 6}, 0.7);
  const auto ones = Tensor<double>::constant({1, 1, 3, 3}, 1.0);
  const auto y = conv2d(c, ones, Tensor<double>());
  for (Index i = 0; i < y.numel(); ++i) CHECK(y.at(i) == doctest::Approx(9 * 0.7));
  CHECK_THROWS_AS(conv2d(x, Tensor<double>::zeros({2, 2, 3, 3}), Tensor<double>()), ShapeError);
}

TEST_CASE("conv2d matches the loop oracle") {
  std::mt19937_64 rng(3);
  for (Index k : {1, 3}) {
    const auto x = oracle::random_tensor({3, 7, 5}, rng, -1, 1, false);
    const auto w = oracle::random_tensor({4, 3, k, k}, rng, -1, 1, false);
    const auto b = oracle::random_tensor({4}, rng, -1, 1, false);
    const auto ref = oracle::conv2d(oracle::to_std(x), 3, 7, 5, oracle::to_std(w), 4, k, oracle::to_std(b));
    const auto out = conv2d(x, w, b);
    REQUIRE(out.shape() == Shape{4, 7, 5});
    for (Index i = 0; i < out.numel(); ++i) CHECK(out.at(i) == doctest::Approx(ref[static_cast<std::size_t>(i)]));
  }
}

TEST_CASE("batched conv2d equals per-sample conv2d") {
  std::mt19937_64 rng(4);
  const auto x = oracle::random_tensor({2, 2, 4, 4}, rng, -1, 1, false);
  const auto w = oracle::random_tensor({3, 2, 3, 3}, rng, -1, 1, false);
  const auto out = conv2d(x, w, Tensor<double>());
  for (Index n = 0; n < 2; ++n) {
    const Tensor<double> xn({2, 4, 4}, Vec<double>(x.values().segment(n * 32, 32)));
    const auto on = conv2d(xn, w, Tensor<double>());
    CHECK(((out.values().segment(n * 48, 48) - on.values()).abs() < 1e-12).all());
  }
}

TEST_CASE("deconv2d examples and loop oracle") {
  const auto one = Tensor<double>::from({1, 1, 1}, {2.0});
  const auto k = Tensor<double>::from({1, 1, 2, 2}, {1, 2, 3, 4});
  const auto y = deconv2d(one, k, Tensor<double>());
  REQUIRE(y.shape() == Shape{1, 2, 2});
  for (Index i = 0; i < 4; ++i) CHECK(y.at(i) == 2 * k.at(i));

  std::mt19937_64 rng(6);
  const auto x = oracle::random_tensor({2, 8, 8}, rng, -1, 1, false);
  const auto w4 = oracle::random_tensor({2, 3, 4, 4}, rng, -1, 1, false);
  const auto out = deconv2d(x, w4, Tensor<double>());
  CHECK(out.shape() == Shape{3, 16, 16});
  const auto ref = oracle::deconv2d(oracle::to_std(x), 2, 8, 8, oracle::to_std(w4), 3, 4);
  for (Index i = 0; i < out.numel(); ++i) CHECK(out.at(i) == doctest::Approx(ref[static_cast<std::size_t>(i)]));
  CHECK_THROWS_AS(deconv2d(x, Tensor<double>::zeros({2, 3, 3, 3}), Tensor<double>()), ShapeError);
}

TEST_CASE("bilinear resize examples and loop oracle") {
  std::mt19937_64 rng(7);
  const auto x = oracle::random_tensor({1, 4, 4}, rng, -1, 1, false);
  CHECK((resize_bilinear(x, 4, 4).values() == x.values()).all());
  const auto c = resize_bilinear(Tensor<double>::constant({2, 3, 5}, 1.25), 7, 11);
  CHECK(((c.values() - 1.25).abs() < 1e-12).all());

  Raster<double> ramp(4, 4);
  for (Index i = 0; i < 4; ++i)
    for (Index j = 0; j < 4; ++j) ramp(i, j) = 0.5 * i + 0.25 * j;
  const auto up = to_raster(resize_bilinear(to_tensor(ramp), 8, 8));
  const auto ref = oracle::bilinear(ramp, 8, 8);
  CHECK(((up - ref).abs() < 1e-6).all());

  for (auto [oh, ow] : {std::pair<Index, Index>{3, 9}, {10, 2}, {1, 1}}) {
    const auto r = oracle::random_raster(5, 6, rng);
    CHECK(((to_raster(resize_bilinear(to_tensor(r), oh, ow)) - oracle::bilinear(r, oh, ow)).abs() < 1e-12).all());
  }
}

TEST_CASE("pad, crop, concat and reshape") {
  const auto x = Tensor<double>::from({1, 2, 2}, {1, 2, 3, 4});
  const auto p = pad_replicate(x, 1, 2);
  REQUIRE(p.shape() == Shape{1, 3, 4});
  CHECK(p.at(3) == 2);
  CHECK(p.at(11) == 4);
  CHECK((crop(p, 2, 2).values() == x.values()).all());
  const auto cc = concat_channels(x, x * 2.0);
  CHECK(cc.shape() == Shape{2, 2, 2});
  CHECK(cc.at(4) == 2);
  CHECK(reshape(x, {4}).shape() == Shape{4});
  CHECK_THROWS_AS(reshape(x, {3}), ShapeError);
}

TEST_CASE("finite-difference checks of every differentiable op") {
  check_gradients("add", [](std::mt19937_64& rng, int t) {
    Inputs in{oracle::random_tensor({2, 3, 3}, rng), oracle::random_tensor({2, 3, 3}, rng)};
    return std::pair{in, Fn([t](const Inputs& v) { return oracle::project(v[0] + v[1], t); })};
  });
  check_gradients("sub", [](std::mt19937_64& rng, int t) {
    Inputs in{oracle::random_tensor({2, 3, 3}, rng), oracle::random_tensor({2}, rng)};
    return std::pair{in, Fn([t](const Inputs& v) { return oracle::project(v[0] - v[1], t); })};
  });
  check_gradients("mul broadcast", [](std::mt19937_64& rng, int t) {
    Inputs in{oracle::random_tensor({3, 4, 2}, rng), oracle::random_tensor({3}, rng)};
    return std::pair{in, Fn([t](const Inputs& v) { return oracle::project(v[0] * v[1], t); })};
  });
  check_gradients("div", [](std::mt19937_64& rng, int t) {
    Inputs in{oracle::random_tensor({2, 3, 3}, rng), oracle::random_tensor({2, 3, 3}, rng, 0.5, 2)};
    return std::pair{in, Fn([t](const Inputs& v) { return oracle::project(v[0] / v[1], t); })};
  });
  check_gradients("scalar ops", [](std::mt19937_64& rng, int t) {
    Inputs in{oracle::random_tensor({5}, rng)};
    return std::pair{in, Fn([t](const Inputs& v) { return oracle::project((v[0] * 3.0 - 1.0) / 2.0 + 4.0, t); })};
  });
  check_gradients("abs", [](std::mt19937_64& rng, int t) {
    Inputs in{oracle::random_tensor({12}, rng)};
    return std::pair{in, Fn([t](const Inputs& v) { return oracle::project(ducos::abs(v[0]), t); })};
  });
  check_gradients("sqrt", [](std::mt19937_64& rng, int t) {
    Inputs in{oracle::random_tensor({12}, rng, 0.1, 2)};
    return std::pair{in, Fn([t](const Inputs& v) { return oracle::project(ducos::sqrt(v[0]), t); })};
  });
  check_gradients("square", [](std::mt19937_64& rng, int t) {
    Inputs in{oracle::random_tensor({12}, rng)};
    return std::pair{in, Fn([t](const Inputs& v) { return oracle::project(square(v[0]), t); })};
  });
  check_gradients("sigmoid", [](std::mt19937_64& rng, int t) {
    Inputs in{oracle::random_tensor({12}, rng, -3, 3)};
    return std::pair{in, Fn([t](const Inputs& v) { return oracle::project(sigmoid(v[0]), t); })};
  });
  check_gradients("relu", [](std::mt19937_64& rng, int t) {
    Inputs in{oracle::random_tensor({12}, rng)};
    return std::pair{in, Fn([t](const Inputs& v) { return oracle::project(relu(v[0]), t); })};
  });
  check_gradients("neg", [](std::mt19937_64& rng, int t) {
    Inputs in{oracle::random_tensor({6}, rng)};
    return std::pair{in, Fn([t](const Inputs& v) { return oracle::project(-v[0], t); })};
  });
  check_gradients("clamp", [](std::mt19937_64& rng, int t) {
    Inputs in{oracle::random_tensor({12}, rng, -2, 2)};
    return std::pair{in, Fn([t](const Inputs& v) { return oracle::project(clamp(v[0], -1.0, 1.0), t); })};
  });
  check_gradients("mean/sum axes", [](std::mt19937_64& rng, int t) {
    Inputs in{oracle::random_tensor({3, 4, 5}, rng)};
    return std::pair{in, Fn([t](const Inputs& v) {
                       return oracle::project(mean(v[0], {1, 2}), t) + oracle::project(sum(v[0], {0}), t + 1);
                     })};
  });
  check_gradients("std", [](std::mt19937_64& rng, int t) {
    Inputs in{oracle::random_tensor({3, 4, 5}, rng)};
    return std::pair{in, Fn([t](const Inputs& v) { return oracle::project(reduce(ReduceKind::std, v[0], {1, 2}), t); })};
  });
  check_gradients("conv2d 3x3", [](std::mt19937_64& rng, int t) {
    Inputs in{oracle::random_tensor({2, 5, 6}, rng), oracle::random_tensor({3, 2, 3, 3}, rng),
              oracle::random_tensor({3}, rng)};
    return std::pair{in, Fn([t](const Inputs& v) { return oracle::project(conv2d(v[0], v[1], v[2]), t); })};
  });
  check_gradients("conv2d 1x1", [](std::mt19937_64& rng, int t) {
    Inputs in{oracle::random_tensor({3, 4, 4}, rng), oracle::random_tensor({2, 3, 1, 1}, rng),
              oracle::random_tensor({2}, rng)};
    return std::pair{in, Fn([t](const Inputs& v) { return oracle::project(conv2d(v[0], v[1], v[2]), t); })};
  });
  check_gradients("deconv2d", [](std::mt19937_64& rng, int t) {
    const Index k = t % 2 ? 2 : 4;
    Inputs in{oracle::random_tensor({2, 3, 4}, rng), oracle::random_tensor({2, 3, k, k}, rng),
              oracle::random_tensor({3}, rng)};
    return std::pair{in, Fn([t](const Inputs& v) { return oracle::project(deconv2d(v[0], v[1], v[2]), t); })};
  });
  check_gradients("resize_bilinear", [](std::mt19937_64& rng, int t) {
    Inputs in{oracle::random_tensor({2, 3, 4}, rng)};
    const Index oh = 2 + t % 7, ow = 3 + t % 5;
    return std::pair{in, Fn([t, oh, ow](const Inputs& v) { return oracle::project(resize_bilinear(v[0], oh, ow), t); })};
  });
  check_gradients("pad/crop/concat/reshape", [](std::mt19937_64& rng, int t) {
    Inputs in{oracle::random_tensor({2, 3, 3}, rng), oracle::random_tensor({1, 3, 3}, rng)};
    return std::pair{in, Fn([t](const Inputs& v) {
                       const auto c = concat_channels(pad_replicate(v[0], 2, 1), pad_replicate(v[1], 2, 1));
                       return oracle::project(reshape(crop(c, 4, 3), {3, 12}), t);
                     })};
  });
}
