#include "ducos/scene.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace ducos {

namespace {

bool covers_rect(const Primitive& p, double y, double x) {
  return y >= p.top && y < p.bottom && x >= p.left && x < p.right;
}

}  // namespace

Raster<float> Scene::luminance() const {
  return (0.299f * rgb[0] + 0.587f * rgb[1] + 0.114f * rgb[2]).eval();
}

Scene gen_scene(const SceneSpec& spec, Index height, Index width) {
  if (height < kMinSceneExtent || width < kMinSceneExtent) {
    throw std::invalid_argument("scene extent must be at least " + std::to_string(kMinSceneExtent));
  }
  if (!(spec.plane_top > 0) || !(spec.plane_bottom > 0)) throw std::invalid_argument("plane depth must be positive");

  Scene s;
  Raster<double> depth(height, width);
  s.primitive_id = Raster<std::int32_t>::Zero(height, width);
  for (Index y = 0; y < height; ++y) {
    const double t = height > 1 ? static_cast<double>(y) / static_cast<double>(height - 1) : 0.0;
    const double inv = (1 - t) / spec.plane_top + t / spec.plane_bottom;
    depth.row(y).setConstant(1.0 / inv);
  }

  for (std::size_t k = 0; k < spec.primitives.size(); ++k) {
    const Primitive& p = spec.primitives[k];
    for (Index y = 0; y < height; ++y)
      for (Index x = 0; x < width; ++x) {
        double d = 0;
        if (p.kind == PrimitiveKind::rectangle) {
          if (!covers_rect(p, static_cast<double>(y), static_cast<double>(x))) continue;
          d = p.depth;
        } else {
          const double dy = static_cast<double>(y) - p.cy;
          const double dx = static_cast<double>(x) - p.cx;
          const double rho2 = (dy * dy + dx * dx) / (p.radius * p.radius);
          if (rho2 > 1) continue;
          d = p.depth - p.bulge * std::sqrt(1 - rho2);
        }
        if (d < depth(y, x)) {
          depth(y, x) = d;
          s.primitive_id(y, x) = static_cast<std::int32_t>(k + 1);
        }
      }
  }

  // Occlusion edges: visible pixel nearer than a 4-neighbour of another primitive.
  s.discontinuity = Raster<std::uint8_t>::Zero(height, width);
  constexpr int dy4[4] = {-1, 1, 0, 0};
  constexpr int dx4[4] = {0, 0, -1, 1};
  for (Index y = 0; y < height; ++y)
    for (Index x = 0; x < width; ++x)
      for (int n = 0; n < 4; ++n) {
        const Index yy = y + dy4[n];
        const Index xx = x + dx4[n];
        if (yy < 0 || yy >= height || xx < 0 || xx >= width) continue;
        if (s.primitive_id(yy, xx) != s.primitive_id(y, x) && depth(y, x) < depth(yy, xx)) {
          s.discontinuity(y, x) = 1;
        }
      }

  for (int c = 0; c < 3; ++c) s.rgb[static_cast<std::size_t>(c)] = Raster<float>(height, width);
  for (Index y = 0; y < height; ++y)
    for (Index x = 0; x < width; ++x) {
      const std::int32_t id = s.primitive_id(y, x);
      std::array<double, 3> albedo;
      if (id == 0) {
        const bool checker = ((y / 8) + (x / 8)) % 2 == 0;
        albedo = checker ? std::array<double, 3>{0.55, 0.5, 0.45} : std::array<double, 3>{0.35, 0.4, 0.45};
      } else {
        albedo = spec.primitives[static_cast<std::size_t>(id - 1)].albedo;
      }
      const double shade = std::min(1.0, 0.4 + 0.3 / depth(y, x));
      for (int c = 0; c < 3; ++c) {
        s.rgb[static_cast<std::size_t>(c)](y, x) = static_cast<float>(std::clamp(albedo[static_cast<std::size_t>(c)] * shade, 0.0, 1.0));
      }
    }

  for (const Primitive& hole : spec.holes)
    for (Index y = 0; y < height; ++y)
      for (Index x = 0; x < width; ++x)
        if (covers_rect(hole, static_cast<double>(y), static_cast<double>(x))) {
          depth(y, x) = 0;
          s.primitive_id(y, x) = -1;
        }

  s.gt_depth = depth.cast<float>();
  return s;
}

SceneSpec random_scene_spec(std::uint64_t seed, Index height, Index width) {
  std::mt19937_64 rng(seed);
  auto uniform = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  const double h = static_cast<double>(height);
  const double w = static_cast<double>(width);

  SceneSpec spec;
  spec.plane_top = uniform(6.0, 10.0);
  spec.plane_bottom = uniform(2.0, 4.0);
  const int count = std::uniform_int_distribution<int>(2, 6)(rng);
  for (int i = 0; i < count; ++i) {
    Primitive p;
    p.depth = uniform(0.5, 10.0);
    p.albedo = {uniform(0.2, 0.9), uniform(0.2, 0.9), uniform(0.2, 0.9)};
    if (uniform(0, 1) < 0.5) {
      p.kind = PrimitiveKind::rectangle;
      const double rh = uniform(0.15, 0.45) * h;
      const double rw = uniform(0.15, 0.45) * w;
      p.top = std::floor(uniform(0, h - rh));
      p.left = std::floor(uniform(0, w - rw));
      p.bottom = std::floor(p.top + rh);
      p.right = std::floor(p.left + rw);
    } else {
      p.kind = PrimitiveKind::sphere;
      p.radius = uniform(0.08, 0.22) * std::min(h, w);
      p.cy = uniform(p.radius, h - p.radius);
      p.cx = uniform(p.radius, w - p.radius);
      p.bulge = uniform(0.05, 0.4) * (p.depth - 0.5);
    }
    spec.primitives.push_back(p);
  }
  return spec;
}

Scene gen_scene(std::uint64_t seed, Index height, Index width) {
  Scene s = gen_scene(random_scene_spec(seed, height, width), height, width);
  s.seed = seed;
  return s;
}

}  // namespace ducos
