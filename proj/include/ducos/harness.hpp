#ifndef DUCOS_HARNESS_HPP
#define DUCOS_HARNESS_HPP

#include "ducos/prompts.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ducos {

enum class Regime { clean, noisy };

std::string to_string(Regime r);
Regime regime_from_string(const std::string& name);

inline constexpr double kNoiseBlurSigma = 3.6;
inline constexpr double kNoiseStd = 0.07;

struct SamplePair {
  Raster<float> x;   // bicubic-upsampled LR depth, H x W, metres
  Raster<float> z;   // ground truth, H x W, metres
  Raster<float> lr;  // the degraded low-resolution depth
  PromptFlow prompts;
  double scale = 2;
  Regime regime = Regime::clean;
};

/// LR = bicubic(Z, 1/scale); in the noisy regime the LR is mapped to [0,1],
/// blurred (sigma 3.6), perturbed with N(0, 0.07) and mapped back. X is the
/// bicubic upsampling of LR to the ground-truth extent. Prompts come from
/// the synthetic oracle unless given.
SamplePair degrade(const Scene& scene, double scale, Regime regime, std::uint64_t seed,
                   std::optional<PromptFlow> prompts = std::nullopt);

inline constexpr double kRatioEps = 1e-8;
inline constexpr double kDelta1 = 1.25;
inline constexpr double kDelta105 = 1.05;

/// Masks are nonzero where a pixel counts; without one, z > 0 is used.
template <typename T>
double metric_rmse(const Raster<T>& y, const Raster<T>& z, const Raster<std::uint8_t>& mask = {});
template <typename T>
double metric_mae(const Raster<T>& y, const Raster<T>& z, const Raster<std::uint8_t>& mask = {});
/// Percentage of pixels with max(y/z, z/y) < threshold. Ratios use a 1e-8
/// guard; a nonpositive prediction always fails.
template <typename T>
double metric_delta(const Raster<T>& y, const Raster<T>& z, double threshold, const Raster<std::uint8_t>& mask = {});

struct SampleMetrics {
  double rmse = 0, mae = 0, delta1 = 0, delta105 = 0;
};

template <typename T>
SampleMetrics sample_metrics(const Raster<T>& y, const Raster<T>& z);

/// Per-sample averages.
struct MetricsReport {
  double rmse = 0;
  double mae = 0;
  std::map<double, double> delta;  // threshold -> percentage
  Index n_samples = 0;

  static MetricsReport aggregate(const std::vector<SampleMetrics>& samples);
};

struct EvalRow {
  double scale = 0;
  Regime regime = Regime::clean;
  MetricsReport report;
};

using Predictor = std::function<Raster<float>(const SamplePair&)>;

struct EvalOptions {
  std::uint64_t seed = 0;
  int threads = 1;
  /// When set, |Y - Z| maps are written here as 8-bit PGMs.
  std::optional<std::filesystem::path> error_map_dir;
};

/// One row per (scale, regime), scales outermost.
std::vector<EvalRow> eval_run(const Predictor& predict, const std::vector<Scene>& scenes,
                              const std::vector<double>& scales, const std::vector<Regime>& regimes,
                              const EvalOptions& options = {});

inline constexpr const char* kMetricsHeader = "scale,regime,n_samples,rmse,mae,delta_1.25,delta_1.05";
void write_metrics_csv(std::ostream& os, const std::vector<EvalRow>& rows);

/// Seed of the noise draw for one (scene, scale, regime) cell.
std::uint64_t degrade_seed(std::uint64_t base, std::uint64_t scene_seed, double scale);

}  // namespace ducos

#endif  // DUCOS_HARNESS_HPP
