#ifndef DUCOS_IMAGE_OPS_HPP
#define DUCOS_IMAGE_OPS_HPP

#include "ducos/tensor.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace ducos {

/// Row-major 2-D raster used by the non-learned pipeline.
template <typename T>
using Raster = Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Taps of a 1-D resampling or smoothing kernel centred on a sample.
struct Kernel1D {
  std::vector<double> taps;
  int support = 0;  // radius in pixels

  double sum() const;
};

/// Keys cubic convolution weight; a = -0.5 gives Catmull-Rom.
double cubic_weight(double t, double a = -0.5);

/// The four bicubic taps for a fractional offset t in [0,1).
Kernel1D cubic_taps(double t, double a = -0.5);

/// Normalized Gaussian taps with radius ceil(3 sigma).
Kernel1D gaussian_kernel(double sigma);

/// Separable bicubic resampling with replicate borders and half-pixel
/// centres. Downsampling evaluates the same kernel on the coarse grid.
template <typename T>
Raster<T> bicubic_resize(const Raster<T>& x, Index out_h, Index out_w);

/// Output extents are round(extent * scale), at least 1.
template <typename T>
Raster<T> bicubic_resize(const Raster<T>& x, double scale);

/// Per-plane bicubic resampling of a [C,H,W] tensor (no gradient).
template <typename T>
Tensor<T> bicubic_resize(const Tensor<T>& x, Index out_h, Index out_w);

inline constexpr double kMinMaxEps = 1e-8;

/// (x - min) / (max - min + 1e-8). The statistics are constants for backward.
template <typename T>
Tensor<T> minmax_normalize(const Tensor<T>& x);

template <typename T>
Raster<T> minmax_normalize(const Raster<T>& x);

/// Records the statistics used by minmax_normalize while alive and can
/// replay them, so a finite-difference oracle sees the same detached
/// constants as the backward pass. Test hook.
class DetachedStatsScope {
 public:
  DetachedStatsScope();
  ~DetachedStatsScope();
  DetachedStatsScope(const DetachedStatsScope&) = delete;
  DetachedStatsScope& operator=(const DetachedStatsScope&) = delete;

  /// Subsequent minmax_normalize calls reuse the recorded values in order.
  void replay();
  std::size_t size() const { return values_.size(); }

  std::pair<double, double> next(double lo, double hi);

 private:
  std::vector<std::pair<double, double>> values_;
  std::size_t cursor_ = 0;
  bool replaying_ = false;
  DetachedStatsScope* previous_;
};

enum class GradientOperator { central, sobel };

inline constexpr double kGradientEps = 1e-8;

/// sqrt(dx^2 + dy^2 + eps^2) per plane of a [C,H,W] tensor.
///
/// `central` uses (x[j+1] - x[j-1]) / 2 inside and one-sided differences at
/// the borders; `sobel` uses the 3x3 Sobel pair scaled by 1/8 with replicate
/// borders. An axis of extent 1 has zero derivative.
template <typename T>
Tensor<T> gradient_magnitude(const Tensor<T>& x, GradientOperator op = GradientOperator::central);

/// Differentiable first derivative along `axis` (0 = rows/y, 1 = columns/x).
template <typename T>
Tensor<T> spatial_derivative(const Tensor<T>& x, int axis, GradientOperator op = GradientOperator::central);

template <typename T>
Raster<T> gaussian_blur(const Raster<T>& x, double sigma);

/// Adds N(mean, std) samples from a mt19937_64 seeded with `seed`.
template <typename T>
Raster<T> add_gaussian_noise(const Raster<T>& x, double mean, double std, std::uint64_t seed);

template <typename T>
Tensor<T> to_tensor(const Raster<T>& r);

/// Plane `c` of a [C,H,W] tensor.
template <typename T>
Raster<T> to_raster(const Tensor<T>& t, Index c = 0);

}  // namespace ducos

#endif  // DUCOS_IMAGE_OPS_HPP
