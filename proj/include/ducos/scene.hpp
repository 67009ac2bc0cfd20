#ifndef DUCOS_SCENE_HPP
#define DUCOS_SCENE_HPP

#include "ducos/image_ops.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace ducos {

enum class PrimitiveKind { rectangle, sphere };

/// Scene primitive in pixel coordinates.
///
/// Rectangles are fronto-parallel and cover rows [top, bottom) and columns
/// [left, right) at constant `depth`. Spheres are centred at (cy, cx) with
/// pixel radius `radius`; `depth` is the silhouette depth and the cap bulges
/// towards the camera by `bulge` metres at the centre.
struct Primitive {
  PrimitiveKind kind = PrimitiveKind::rectangle;
  double depth = 1.0;
  double top = 0, left = 0, bottom = 0, right = 0;
  double cy = 0, cx = 0, radius = 0, bulge = 0;
  std::array<double, 3> albedo{0.5, 0.5, 0.5};
};

struct SceneSpec {
  /// Ground plane depth at the top and bottom image rows; inverse depth is
  /// interpolated linearly in between.
  double plane_top = 5.0;
  double plane_bottom = 5.0;
  std::vector<Primitive> primitives;
  /// Invalid (zero-depth) rectangles, as primitives with only bounds used.
  std::vector<Primitive> holes;
};

/// Synthetic RGB-D scene: depth in metres, RGB in [0,1], occlusion edges.
struct Scene {
  Raster<float> gt_depth;
  std::array<Raster<float>, 3> rgb;
  Raster<std::uint8_t> discontinuity;  // 1 on the near side of a depth edge
  Raster<std::int32_t> primitive_id;   // 0 = plane, k = primitives[k-1], -1 = hole
  std::uint64_t seed = 0;

  Index height() const { return gt_depth.rows(); }
  Index width() const { return gt_depth.cols(); }
  /// Luminance 0.299 R + 0.587 G + 0.114 B.
  Raster<float> luminance() const;
};

inline constexpr Index kMinSceneExtent = 28;

Scene gen_scene(const SceneSpec& spec, Index height, Index width);

/// Random plane plus 2-6 rectangles and spheres at depths in [0.5, 10] m.
SceneSpec random_scene_spec(std::uint64_t seed, Index height, Index width);
Scene gen_scene(std::uint64_t seed, Index height, Index width);

}  // namespace ducos

#endif  // DUCOS_SCENE_HPP
