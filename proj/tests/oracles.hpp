// Independent reference implementations used by the test suites. Nothing
// here calls into the library's kernels; only plain loops over std/Eigen
// storage.
#ifndef DUCOS_TESTS_ORACLES_HPP
#define DUCOS_TESTS_ORACLES_HPP

#include "ducos/image_ops.hpp"
#include "ducos/ops.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace oracle {

using ducos::Index;
using ducos::Shape;
using ducos::Tensor;
using ducos::Vec;
template <typename T>
using Raster = ducos::Raster<T>;

inline Tensor<double> random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1, double hi = 1,
                                    bool requires_grad = true) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vec<double> v(ducos::numel(shape));
  for (Index i = 0; i < v.size(); ++i) v[i] = u(rng);
  return Tensor<double>(shape, v, requires_grad);
}

inline Raster<double> random_raster(Index h, Index w, std::mt19937_64& rng, double lo = 0, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  Raster<double> r(h, w);
  for (Index i = 0; i < r.size(); ++i) r.data()[i] = u(rng);
  return r;
}

/// Relative error ||analytic - numeric|| / max(||numeric||, ||analytic||, 1e-12)
/// of the gradient of `f` w.r.t. every entry of every input, central
/// differences with step h. `f` must rebuild the graph from the inputs.
inline double gradient_error(std::vector<Tensor<double>> inputs,
                             const std::function<Tensor<double>(const std::vector<Tensor<double>>&)>& f,
                             double h = 1e-5, Index max_coords = 200, std::uint64_t seed = 0) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  ducos::backward(f(inputs));
  std::vector<Vec<double>> analytic;
  for (auto& t : inputs) analytic.push_back(t.grad());

  std::mt19937_64 rng(seed);
  double diff2 = 0, num2 = 0, ana2 = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Index n = inputs[k].numel();
    std::vector<Index> coords(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) coords[static_cast<std::size_t>(i)] = i;
    if (n > max_coords) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(static_cast<std::size_t>(max_coords));
    }
    for (Index i : coords) {
      double numeric = 0;
      {
        ducos::NoGradGuard guard;
        double& v = inputs[k].mutable_values()[i];
        const double saved = v;
        v = saved + h;
        const double fp = f(inputs).item();
        v = saved - h;
        const double fm = f(inputs).item();
        v = saved;
        numeric = (fp - fm) / (2 * h);
      }
      const double a = analytic[k][i];
      diff2 += (a - numeric) * (a - numeric);
      num2 += numeric * numeric;
      ana2 += a * a;
    }
  }
  return std::sqrt(diff2) / std::max({std::sqrt(num2), std::sqrt(ana2), 1e-12});
}

/// sum(out * R) for a fixed random R, turning any op into a scalar.
inline Tensor<double> project(const Tensor<double>& out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return ducos::sum(out * random_tensor(out.shape(), rng, -1, 1, false));
}

inline Index clampi(Index v, Index lo, Index hi) { return std::min(std::max(v, lo), hi); }

/// Same-size replicate-padded convolution of [C,H,W] with [Co,C,k,k].
inline std::vector<double> conv2d(const std::vector<double>& x, Index c, Index h, Index w,
                                  const std::vector<double>& wt, Index co, Index k, const std::vector<double>& bias) {
  std::vector<double> out(static_cast<std::size_t>(co * h * w), 0.0);
  const Index pad = k / 2;
  for (Index o = 0; o < co; ++o)
    for (Index y = 0; y < h; ++y)
      for (Index xx = 0; xx < w; ++xx) {
        double acc = bias.empty() ? 0.0 : bias[static_cast<std::size_t>(o)];
        for (Index i = 0; i < c; ++i)
          for (Index ky = 0; ky < k; ++ky)
            for (Index kx = 0; kx < k; ++kx) {
              const Index sy = clampi(y + ky - pad, 0, h - 1);
              const Index sx = clampi(xx + kx - pad, 0, w - 1);
              acc += x[static_cast<std::size_t>((i * h + sy) * w + sx)] *
                     wt[static_cast<std::size_t>(((o * c + i) * k + ky) * k + kx)];
            }
        out[static_cast<std::size_t>((o * h + y) * w + xx)] = acc;
      }
  return out;
}

/// Stride-2 transposed convolution, weight [C,Co,k,k], pad (k-2)/2.
inline std::vector<double> deconv2d(const std::vector<double>& x, Index c, Index h, Index w,
                                    const std::vector<double>& wt, Index co, Index k) {
  const Index s = 2, pad = (k - s) / 2, ho = h * s, wo = w * s;
  std::vector<double> out(static_cast<std::size_t>(co * ho * wo), 0.0);
  for (Index i = 0; i < c; ++i)
    for (Index y = 0; y < h; ++y)
      for (Index xx = 0; xx < w; ++xx)
        for (Index o = 0; o < co; ++o)
          for (Index ky = 0; ky < k; ++ky)
            for (Index kx = 0; kx < k; ++kx) {
              const Index oy = y * s + ky - pad, ox = xx * s + kx - pad;
              if (oy < 0 || oy >= ho || ox < 0 || ox >= wo) continue;
              out[static_cast<std::size_t>((o * ho + oy) * wo + ox)] +=
                  x[static_cast<std::size_t>((i * h + y) * w + xx)] *
                  wt[static_cast<std::size_t>(((i * co + o) * k + ky) * k + kx)];
            }
  return out;
}

/// Bilinear resampling with half-pixel centres (align_corners = false).
inline Raster<double> bilinear(const Raster<double>& x, Index oh, Index ow) {
  Raster<double> out(oh, ow);
  const Index h = x.rows(), w = x.cols();
  for (Index y = 0; y < oh; ++y) {
    double sy = (y + 0.5) * static_cast<double>(h) / oh - 0.5;
    if (sy < 0) sy = 0;
    const Index y0 = std::min<Index>(static_cast<Index>(std::floor(sy)), h - 1);
    const Index y1 = std::min<Index>(y0 + 1, h - 1);
    const double ly = sy - y0;
    for (Index xx = 0; xx < ow; ++xx) {
      double sx = (xx + 0.5) * static_cast<double>(w) / ow - 0.5;
      if (sx < 0) sx = 0;
      const Index x0 = std::min<Index>(static_cast<Index>(std::floor(sx)), w - 1);
      const Index x1 = std::min<Index>(x0 + 1, w - 1);
      const double lx = sx - x0;
      out(y, xx) = (1 - ly) * ((1 - lx) * x(y0, x0) + lx * x(y0, x1)) + ly * ((1 - lx) * x(y1, x0) + lx * x(y1, x1));
    }
  }
  return out;
}

/// Keys cubic kernel, a = -0.5.
inline double keys(double t) {
  const double a = -0.5;
  t = std::abs(t);
  if (t <= 1) return (a + 2) * t * t * t - (a + 3) * t * t + 1;
  if (t < 2) return a * t * t * t - 5 * a * t * t + 8 * a * t - 4 * a;
  return 0;
}

/// Non-separable 2-D evaluation of the bicubic resampler.
inline Raster<double> bicubic(const Raster<double>& x, Index oh, Index ow) {
  Raster<double> out(oh, ow);
  const Index h = x.rows(), w = x.cols();
  for (Index y = 0; y < oh; ++y) {
    const double sy = (y + 0.5) * static_cast<double>(h) / oh - 0.5;
    const Index by = static_cast<Index>(std::floor(sy));
    for (Index xx = 0; xx < ow; ++xx) {
      const double sx = (xx + 0.5) * static_cast<double>(w) / ow - 0.5;
      const Index bx = static_cast<Index>(std::floor(sx));
      double acc = 0;
      for (Index j = by - 1; j <= by + 2; ++j)
        for (Index i = bx - 1; i <= bx + 2; ++i) {
          acc += keys(sy - j) * keys(sx - i) * x(clampi(j, 0, h - 1), clampi(i, 0, w - 1));
        }
      out(y, xx) = acc;
    }
  }
  return out;
}

inline Raster<double> minmax(const Raster<double>& x) {
  const double lo = x.minCoeff(), hi = x.maxCoeff();
  return (x - lo) / (hi - lo + 1e-8);
}

/// Gradient magnitude with central differences (one-sided at borders) or
/// Sobel / 8 with replicate borders; extent-1 axes have zero derivative.
inline Raster<double> gradient_magnitude(const Raster<double>& x, bool sobel = false) {
  const Index h = x.rows(), w = x.cols();
  Raster<double> out(h, w);
  auto at = [&](Index y, Index xx) { return x(clampi(y, 0, h - 1), clampi(xx, 0, w - 1)); };
  for (Index y = 0; y < h; ++y)
    for (Index xx = 0; xx < w; ++xx) {
      double dx = 0, dy = 0;
      if (sobel) {
        if (w > 1) {
          dx = ((at(y - 1, xx + 1) + 2 * at(y, xx + 1) + at(y + 1, xx + 1)) -
                (at(y - 1, xx - 1) + 2 * at(y, xx - 1) + at(y + 1, xx - 1))) /
               8.0;
        }
        if (h > 1) {
          dy = ((at(y + 1, xx - 1) + 2 * at(y + 1, xx) + at(y + 1, xx + 1)) -
                (at(y - 1, xx - 1) + 2 * at(y - 1, xx) + at(y - 1, xx + 1))) /
               8.0;
        }
      } else {
        if (w > 1) {
          if (xx == 0)
            dx = x(y, 1) - x(y, 0);
          else if (xx == w - 1)
            dx = x(y, w - 1) - x(y, w - 2);
          else
            dx = (x(y, xx + 1) - x(y, xx - 1)) / 2;
        }
        if (h > 1) {
          if (y == 0)
            dy = x(1, xx) - x(0, xx);
          else if (y == h - 1)
            dy = x(h - 1, xx) - x(h - 2, xx);
          else
            dy = (x(y + 1, xx) - x(y - 1, xx)) / 2;
        }
      }
      out(y, xx) = std::sqrt(dx * dx + dy * dy + 1e-16);
    }
  return out;
}

/// Per-channel Pearson correlation, zero for near-constant channels.
inline std::vector<double> pcc(const std::vector<double>& f, const std::vector<double>& d, Index c, Index n) {
  std::vector<double> r(static_cast<std::size_t>(c));
  for (Index k = 0; k < c; ++k) {
    double mf = 0, md = 0;
    for (Index i = 0; i < n; ++i) {
      mf += f[static_cast<std::size_t>(k * n + i)];
      md += d[static_cast<std::size_t>(k * n + i)];
    }
    mf /= n;
    md /= n;
    double cov = 0, vf = 0, vd = 0;
    for (Index i = 0; i < n; ++i) {
      const double a = f[static_cast<std::size_t>(k * n + i)] - mf, b = d[static_cast<std::size_t>(k * n + i)] - md;
      cov += a * b;
      vf += a * a;
      vd += b * b;
    }
    if (std::sqrt(vf / n) < 1e-6 || std::sqrt(vd / n) < 1e-6) {
      r[static_cast<std::size_t>(k)] = 0;
    } else {
      r[static_cast<std::size_t>(k)] = std::clamp(cov / std::sqrt(vf * vd), -1.0, 1.0);
    }
  }
  return r;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline std::vector<double> to_std(const Tensor<double>& t) {
  return std::vector<double>(t.values().data(), t.values().data() + t.numel());
}

}  // namespace oracle

#endif  // DUCOS_TESTS_ORACLES_HPP
