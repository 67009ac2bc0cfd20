#include "ducos/image_ops.hpp"

#include "ducos/ops.hpp"

#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace ducos {

namespace {

thread_local DetachedStatsScope* g_stats_scope = nullptr;

// Resamples rows of `src` (h x in_w) into h x out_w.
template <typename T>
Raster<T> resize_rows(const Raster<T>& src, Index out_w) {
  const Index in_w = src.cols();
  Raster<T> out(src.rows(), out_w);
  const double scale = static_cast<double>(in_w) / static_cast<double>(out_w);
  for (Index ox = 0; ox < out_w; ++ox) {
    const double pos = (static_cast<double>(ox) + 0.5) * scale - 0.5;
    const double base = std::floor(pos);
    const Kernel1D k = cubic_taps(pos - base);
    const auto i = static_cast<Index>(base);
    for (Index y = 0; y < src.rows(); ++y) {
      double acc = 0;
      for (int t = 0; t < 4; ++t) {
        const Index sx = std::clamp<Index>(i - 1 + t, 0, in_w - 1);
        acc += k.taps[static_cast<std::size_t>(t)] * static_cast<double>(src(y, sx));
      }
      out(y, ox) = static_cast<T>(acc);
    }
  }
  return out;
}

template <typename T>
Raster<T> convolve_rows(const Raster<T>& src, const Kernel1D& k) {
  Raster<T> out(src.rows(), src.cols());
  const Index w = src.cols();
  for (Index y = 0; y < src.rows(); ++y)
    for (Index x = 0; x < w; ++x) {
      double acc = 0;
      for (int t = -k.support; t <= k.support; ++t) {
        acc += k.taps[static_cast<std::size_t>(t + k.support)] *
               static_cast<double>(src(y, std::clamp<Index>(x + t, 0, w - 1)));
      }
      out(y, x) = static_cast<T>(acc);
    }
  return out;
}

// Derivative operator on one h x w plane as a sparse matrix over flat indices.
template <typename T>
Eigen::SparseMatrix<T, Eigen::RowMajor> derivative_matrix(Index h, Index w, int axis, GradientOperator op) {
  using Triplet = Eigen::Triplet<T>;
  std::vector<Triplet> entries;
  const Index n = h * w;
  const Index along = axis == 0 ? h : w;
  auto flat = [w](Index y, Index x) { return y * w + x; };
  auto clampy = [h](Index y) { return std::clamp<Index>(y, 0, h - 1); };
  auto clampx = [w](Index x) { return std::clamp<Index>(x, 0, w - 1); };
  if (along > 1) {
    entries.reserve(static_cast<std::size_t>(n * (op == GradientOperator::sobel ? 6 : 2)));
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x) {
        const Index o = flat(y, x);
        const Index pos = axis == 0 ? y : x;
        if (op == GradientOperator::central) {
          Index lo = pos - 1;
          Index hi = pos + 1;
          T scale = T(0.5);
          if (pos == 0) {
            lo = 0;
            hi = 1;
            scale = T(1);
          } else if (pos == along - 1) {
            lo = along - 2;
            hi = along - 1;
            scale = T(1);
          }
          entries.emplace_back(o, axis == 0 ? flat(hi, x) : flat(y, hi), scale);
          entries.emplace_back(o, axis == 0 ? flat(lo, x) : flat(y, lo), -scale);
        } else {
          static constexpr T kSmooth[3] = {T(1), T(2), T(1)};
          for (int s = -1; s <= 1; ++s) {
            const T wgt = kSmooth[s + 1] / T(8);
            if (axis == 1) {
              const Index yy = clampy(y + s);
              entries.emplace_back(o, flat(yy, clampx(x + 1)), wgt);
              entries.emplace_back(o, flat(yy, clampx(x - 1)), -wgt);
            } else {
              const Index xx = clampx(x + s);
              entries.emplace_back(o, flat(clampy(y + 1), xx), wgt);
              entries.emplace_back(o, flat(clampy(y - 1), xx), -wgt);
            }
          }
        }
      }
  }
  Eigen::SparseMatrix<T, Eigen::RowMajor> d(n, n);
  d.setFromTriplets(entries.begin(), entries.end());
  return d;
}

void check_plane_tensor(const Shape& s, const char* op) {
  if (s.size() != 3) throw ShapeError(std::string(op) + " expects [C,H,W], got " + shape_string(s));
}

}  // namespace

double Kernel1D::sum() const { return std::accumulate(taps.begin(), taps.end(), 0.0); }

double cubic_weight(double t, double a) {
  t = std::abs(t);
  if (t <= 1) return ((a + 2) * t - (a + 3)) * t * t + 1;
  if (t < 2) return ((a * t - 5 * a) * t + 8 * a) * t - 4 * a;
  return 0;
}

Kernel1D cubic_taps(double t, double a) {
  return Kernel1D{{cubic_weight(t + 1, a), cubic_weight(t, a), cubic_weight(1 - t, a), cubic_weight(2 - t, a)}, 2};
}

Kernel1D gaussian_kernel(double sigma) {
  if (!(sigma > 0)) throw std::invalid_argument("gaussian sigma must be positive");
  Kernel1D k;
  k.support = static_cast<int>(std::ceil(3 * sigma));
  k.taps.resize(static_cast<std::size_t>(2 * k.support + 1));
  for (int i = -k.support; i <= k.support; ++i) {
    k.taps[static_cast<std::size_t>(i + k.support)] = std::exp(-0.5 * i * i / (sigma * sigma));
  }
  const double s = k.sum();
  for (double& v : k.taps) v /= s;
  return k;
}

template <typename T>
Raster<T> bicubic_resize(const Raster<T>& x, Index out_h, Index out_w) {
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("bicubic_resize: output size must be >= 1");
  if (x.size() == 0) throw std::invalid_argument("bicubic_resize: empty input");
  if (out_h == x.rows() && out_w == x.cols()) return x;
  Raster<T> horiz = out_w == x.cols() ? x : resize_rows<T>(x, out_w);
  if (out_h == x.rows()) return horiz;
  Raster<T> t = horiz.transpose();
  Raster<T> vert = resize_rows<T>(t, out_h);
  return vert.transpose();
}

template <typename T>
Raster<T> bicubic_resize(const Raster<T>& x, double scale) {
  if (!(scale > 0)) throw std::invalid_argument("bicubic_resize: scale must be positive");
  const auto oh = static_cast<Index>(std::lround(static_cast<double>(x.rows()) * scale));
  const auto ow = static_cast<Index>(std::lround(static_cast<double>(x.cols()) * scale));
  return bicubic_resize(x, oh, ow);
}

template <typename T>
Tensor<T> bicubic_resize(const Tensor<T>& x, Index out_h, Index out_w) {
  check_plane_tensor(x.shape(), "bicubic_resize");
  const Index c = x.dim(0);
  Vec<T> out(c * out_h * out_w);
  for (Index p = 0; p < c; ++p) {
    Raster<T> r = bicubic_resize(to_raster(x, p), out_h, out_w);
    out.segment(p * out_h * out_w, out_h * out_w) = Eigen::Map<const Vec<T>>(r.data(), r.size());
  }
  return Tensor<T>({c, out_h, out_w}, std::move(out));
}

DetachedStatsScope::DetachedStatsScope() : previous_(g_stats_scope) { g_stats_scope = this; }
DetachedStatsScope::~DetachedStatsScope() { g_stats_scope = previous_; }

void DetachedStatsScope::replay() {
  replaying_ = true;
  cursor_ = 0;
}

std::pair<double, double> DetachedStatsScope::next(double lo, double hi) {
  if (!replaying_) {
    values_.emplace_back(lo, hi);
    return {lo, hi};
  }
  if (cursor_ >= values_.size()) throw GraphError("detached statistics replay ran past the recording");
  return values_[cursor_++];
}

template <typename T>
Tensor<T> minmax_normalize(const Tensor<T>& x) {
  double lo = static_cast<double>(x.values().minCoeff());
  double hi = static_cast<double>(x.values().maxCoeff());
  if (g_stats_scope) std::tie(lo, hi) = g_stats_scope->next(lo, hi);
  const T inv = static_cast<T>(1.0 / (hi - lo + kMinMaxEps));
  return (x - static_cast<T>(lo)) * inv;
}

template <typename T>
Raster<T> minmax_normalize(const Raster<T>& x) {
  const double lo = static_cast<double>(x.minCoeff());
  const double hi = static_cast<double>(x.maxCoeff());
  return ((x.template cast<double>() - lo) / (hi - lo + kMinMaxEps)).template cast<T>();
}

template <typename T>
Tensor<T> spatial_derivative(const Tensor<T>& x, int axis, GradientOperator op) {
  check_plane_tensor(x.shape(), "spatial_derivative");
  if (axis != 0 && axis != 1) throw ShapeError("spatial_derivative axis must be 0 or 1");
  const Index c = x.dim(0);
  const Index n = x.dim(1) * x.dim(2);
  const auto d = derivative_matrix<T>(x.dim(1), x.dim(2), axis, op);
  Vec<T> out(x.numel());
  for (Index p = 0; p < c; ++p) {
    out.segment(p * n, n).matrix() = d * x.values().segment(p * n, n).matrix();
  }
  auto xn = x.node();
  return record<T>(x.shape(), std::move(out), {x}, [xn, d, c, n](const Vec<T>& g) {
    Vec<T> gx(xn->value.size());
    for (Index p = 0; p < c; ++p) {
      gx.segment(p * n, n).matrix() = d.transpose() * g.segment(p * n, n).matrix();
    }
    xn->accumulate(gx);
  });
}

template <typename T>
Tensor<T> gradient_magnitude(const Tensor<T>& x, GradientOperator op) {
  const Tensor<T> dx = spatial_derivative(x, 1, op);
  const Tensor<T> dy = spatial_derivative(x, 0, op);
  return ducos::sqrt(square(dx) + square(dy) + static_cast<T>(kGradientEps * kGradientEps));
}

template <typename T>
Raster<T> gaussian_blur(const Raster<T>& x, double sigma) {
  const Kernel1D k = gaussian_kernel(sigma);
  Raster<T> h = convolve_rows<T>(x, k);
  Raster<T> t = h.transpose();
  Raster<T> v = convolve_rows<T>(t, k);
  return v.transpose();
}

template <typename T>
Raster<T> add_gaussian_noise(const Raster<T>& x, double mean, double std, std::uint64_t seed) {
  if (std < 0) throw std::invalid_argument("noise std must be >= 0");
  if (std == 0 && mean == 0) return x;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(mean, std);
  Raster<T> out = x;
  for (Index i = 0; i < out.size(); ++i) out.data()[i] = static_cast<T>(out.data()[i] + dist(rng));
  return out;
}

template <typename T>
Tensor<T> to_tensor(const Raster<T>& r) {
  return Tensor<T>({1, r.rows(), r.cols()}, Eigen::Map<const Vec<T>>(r.data(), r.size()));
}

template <typename T>
Raster<T> to_raster(const Tensor<T>& t, Index c) {
  check_plane_tensor(t.shape(), "to_raster");
  const Index h = t.dim(1);
  const Index w = t.dim(2);
  return Eigen::Map<const Raster<T>>(t.values().data() + c * h * w, h, w);
}

#define DUCOS_INSTANTIATE_IMAGE_OPS(T)                                                  \
  template Raster<T> bicubic_resize(const Raster<T>&, Index, Index);                   \
  template Raster<T> bicubic_resize(const Raster<T>&, double);                         \
  template Tensor<T> bicubic_resize(const Tensor<T>&, Index, Index);                   \
  template Tensor<T> minmax_normalize(const Tensor<T>&);                               \
  template Raster<T> minmax_normalize(const Raster<T>&);                               \
  template Tensor<T> spatial_derivative(const Tensor<T>&, int, GradientOperator);      \
  template Tensor<T> gradient_magnitude(const Tensor<T>&, GradientOperator);           \
  template Raster<T> gaussian_blur(const Raster<T>&, double);                          \
  template Raster<T> add_gaussian_noise(const Raster<T>&, double, double, std::uint64_t); \
  template Tensor<T> to_tensor(const Raster<T>&);                                      \
  template Raster<T> to_raster(const Tensor<T>&, Index);

DUCOS_INSTANTIATE_IMAGE_OPS(float)
DUCOS_INSTANTIATE_IMAGE_OPS(double)

}  // namespace ducos
