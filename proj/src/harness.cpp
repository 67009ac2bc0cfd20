#include "ducos/harness.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <ostream>
#include <stdexcept>
#include <thread>

namespace ducos {

std::string to_string(Regime r) { return r == Regime::clean ? "clean" : "noisy"; }

Regime regime_from_string(const std::string& name) {
  if (name == "clean") return Regime::clean;
  if (name == "noisy") return Regime::noisy;
  throw std::invalid_argument("unknown regime: " + name);
}

SamplePair degrade(const Scene& scene, double scale, Regime regime, std::uint64_t seed,
                   std::optional<PromptFlow> prompts) {
  if (!(scale > 1) || !std::isfinite(scale)) throw std::invalid_argument("degrade: scale must be > 1");
  const Index h = scene.height(), w = scene.width();
  const auto lh = static_cast<Index>(std::lround(static_cast<double>(h) / scale));
  const auto lw = static_cast<Index>(std::lround(static_cast<double>(w) / scale));
  if (lh < 2 || lw < 2) {
    throw std::invalid_argument("degrade: LR extent below 2 at scale " + std::to_string(scale));
  }
  SamplePair s;
  s.z = scene.gt_depth;
  s.scale = scale;
  s.regime = regime;
  Raster<double> lr = bicubic_resize(Raster<double>(scene.gt_depth.cast<double>()), lh, lw);
  if (regime == Regime::noisy) {
    const double lo = lr.minCoeff(), hi = lr.maxCoeff();
    const double range = hi > lo ? hi - lo : 1.0;
    Raster<double> n = (lr - lo) / range;
    n = gaussian_blur(n, kNoiseBlurSigma);
    n = add_gaussian_noise(n, 0.0, kNoiseStd, seed);
    lr = n * range + lo;
  }
  s.lr = lr.cast<float>();
  s.x = bicubic_resize(lr, h, w).cast<float>();
  s.prompts = prompts ? std::move(*prompts) : synthetic_prompt_oracle(scene, scene.seed);
  if (s.prompts.height() != h || s.prompts.width() != w) {
    throw ShapeError("degrade: prompt extent does not match the scene");
  }
  return s;
}

namespace {

template <typename T>
Raster<std::uint8_t> resolve_mask(const Raster<T>& y, const Raster<T>& z, const Raster<std::uint8_t>& mask) {
  if (y.rows() != z.rows() || y.cols() != z.cols()) throw ShapeError("metric: prediction/target shape mismatch");
  if (mask.size() == 0) return (z > T(0)).template cast<std::uint8_t>();
  if (mask.rows() != z.rows() || mask.cols() != z.cols()) throw ShapeError("metric: mask shape mismatch");
  return mask;
}

template <typename T, typename F>
double masked_mean(const Raster<T>& y, const Raster<T>& z, const Raster<std::uint8_t>& mask, F f) {
  const Raster<std::uint8_t> m = resolve_mask(y, z, mask);
  double acc = 0;
  Index n = 0;
  for (Index i = 0; i < m.size(); ++i) {
    if (!m.data()[i]) continue;
    acc += f(static_cast<double>(y.data()[i]), static_cast<double>(z.data()[i]));
    ++n;
  }
  if (n == 0) throw std::invalid_argument("metric: empty mask");
  return acc / static_cast<double>(n);
}

}  // namespace

template <typename T>
double metric_rmse(const Raster<T>& y, const Raster<T>& z, const Raster<std::uint8_t>& mask) {
  return std::sqrt(masked_mean(y, z, mask, [](double a, double b) { return (a - b) * (a - b); }));
}

template <typename T>
double metric_mae(const Raster<T>& y, const Raster<T>& z, const Raster<std::uint8_t>& mask) {
  return masked_mean(y, z, mask, [](double a, double b) { return std::abs(a - b); });
}

template <typename T>
double metric_delta(const Raster<T>& y, const Raster<T>& z, double threshold, const Raster<std::uint8_t>& mask) {
  return 100.0 * masked_mean(y, z, mask, [threshold](double a, double b) {
           if (!(a > 0)) return 0.0;
           const double ratio = std::max(a / std::max(b, kRatioEps), b / std::max(a, kRatioEps));
           return ratio < threshold ? 1.0 : 0.0;
         });
}

template <typename T>
SampleMetrics sample_metrics(const Raster<T>& y, const Raster<T>& z) {
  return {metric_rmse(y, z), metric_mae(y, z), metric_delta(y, z, kDelta1), metric_delta(y, z, kDelta105)};
}

MetricsReport MetricsReport::aggregate(const std::vector<SampleMetrics>& samples) {
  MetricsReport r;
  r.delta[kDelta1] = 0;
  r.delta[kDelta105] = 0;
  for (const auto& s : samples) {
    r.rmse += s.rmse;
    r.mae += s.mae;
    r.delta[kDelta1] += s.delta1;
    r.delta[kDelta105] += s.delta105;
  }
  r.n_samples = static_cast<Index>(samples.size());
  if (r.n_samples > 0) {
    const double n = static_cast<double>(r.n_samples);
    r.rmse /= n;
    r.mae /= n;
    for (auto& [t, v] : r.delta) v /= n;
  }
  return r;
}

std::uint64_t degrade_seed(std::uint64_t base, std::uint64_t scene_seed, double scale) {
  // splitmix64 over the three inputs
  auto mix = [](std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  };
  return mix(mix(mix(base) ^ scene_seed) ^ std::bit_cast<std::uint64_t>(scale));
}

namespace {

Raster<std::uint8_t> error_map(const Raster<float>& y, const Raster<float>& z) {
  const Raster<double> e = (y.cast<double>() - z.cast<double>()).abs();
  const double lo = e.minCoeff(), hi = e.maxCoeff();
  const double range = hi > lo ? hi - lo : 1.0;
  return ((e - lo) / range * 255.0).round().cast<std::uint8_t>();
}

std::string scale_tag(double s) {
  std::string t = std::to_string(s);
  t.erase(t.find_last_not_of('0') + 1);
  if (!t.empty() && t.back() == '.') t.pop_back();
  std::replace(t.begin(), t.end(), '.', 'p');
  return t;
}

}  // namespace

std::vector<EvalRow> eval_run(const Predictor& predict, const std::vector<Scene>& scenes,
                              const std::vector<double>& scales, const std::vector<Regime>& regimes,
                              const EvalOptions& options) {
  if (scenes.empty()) throw std::invalid_argument("eval_run: no scenes");
  if (options.error_map_dir) std::filesystem::create_directories(*options.error_map_dir);
  std::vector<EvalRow> rows;
  for (double scale : scales) {
    for (Regime regime : regimes) {
      std::vector<SampleMetrics> metrics(scenes.size());
      std::atomic<std::size_t> next{0};
      auto worker = [&] {
        for (std::size_t i = next++; i < scenes.size(); i = next++) {
          const Scene& sc = scenes[i];
          const SamplePair pair = degrade(sc, scale, regime, degrade_seed(options.seed, sc.seed, scale));
          const Raster<float> y = predict(pair);
          if (y.rows() != pair.z.rows() || y.cols() != pair.z.cols()) {
            throw ShapeError("eval_run: prediction extent differs from ground truth");
          }
          metrics[i] = sample_metrics(y, pair.z);
          if (options.error_map_dir) {
            write_pgm8(*options.error_map_dir /
                           ("err_x" + scale_tag(scale) + "_" + to_string(regime) + "_" + std::to_string(i) + ".pgm"),
                       error_map(y, pair.z));
          }
        }
      };
      const int threads = std::clamp<int>(options.threads, 1, static_cast<int>(scenes.size()));
      if (threads == 1) {
        worker();
      } else {
        std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) {
          pool.emplace_back([&, t] {
            try {
              worker();
            } catch (...) {
              errors[static_cast<std::size_t>(t)] = std::current_exception();
              next = scenes.size();
            }
          });
        }
        for (auto& th : pool) th.join();
        for (auto& e : errors) {
          if (e) std::rethrow_exception(e);
        }
      }
      rows.push_back({scale, regime, MetricsReport::aggregate(metrics)});
    }
  }
  return rows;
}

void write_metrics_csv(std::ostream& os, const std::vector<EvalRow>& rows) {
  os << kMetricsHeader << '\n';
  os.precision(10);
  for (const auto& r : rows) {
    os << r.scale << ',' << to_string(r.regime) << ',' << r.report.n_samples << ',' << r.report.rmse << ','
       << r.report.mae << ',' << r.report.delta.at(kDelta1) << ',' << r.report.delta.at(kDelta105) << '\n';
  }
}

#define DUCOS_INSTANTIATE_METRICS(T)                                                                       \
  template double metric_rmse(const Raster<T>&, const Raster<T>&, const Raster<std::uint8_t>&);            \
  template double metric_mae(const Raster<T>&, const Raster<T>&, const Raster<std::uint8_t>&);             \
  template double metric_delta(const Raster<T>&, const Raster<T>&, double, const Raster<std::uint8_t>&);   \
  template SampleMetrics sample_metrics(const Raster<T>&, const Raster<T>&);

DUCOS_INSTANTIATE_METRICS(float)
DUCOS_INSTANTIATE_METRICS(double)

}  // namespace ducos
