#ifndef DUCOS_PROMPTS_HPP
#define DUCOS_PROMPTS_HPP

#include "ducos/io.hpp"
#include "ducos/scene.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace ducos {

inline constexpr int kPatchSize = 14;
inline constexpr int kPromptStages = 4;
inline constexpr Index kOraclePromptChannels = 24;

enum class PromptSource { file, oracle };

/// Foundation-model prompts: four per-stage feature maps
/// [C_p, ceil(H/p), ceil(W/p)] and a relative depth map [1,H,W] in [0,1].
struct PromptFlow {
  std::vector<Tensor<float>> features;
  Tensor<float> relative_depth;
  PromptSource source = PromptSource::oracle;
  int patch_size = kPatchSize;

  Index height() const { return relative_depth.dim(1); }
  Index width() const { return relative_depth.dim(2); }
  Index channels() const { return features.front().dim(0); }

  /// Throws ShapeError unless the invariants hold.
  void validate() const;
};

/// ceil(extent / patch)
constexpr Index patch_extent(Index extent, int patch = kPatchSize) { return (extent + patch - 1) / patch; }

/// DPF container: "DPF1", u32 header length, JSON descriptor
/// {p, C_p, H, W, dtype, stage_shapes, checksum}, then little-endian float32
/// F_1..F_4 followed by Y'. The checksum is the CRC32 of the payload.
std::vector<std::byte> encode_prompt_file(const PromptFlow& flow);
PromptFlow decode_prompt_file(std::span<const std::byte> bytes);

void write_prompt_file(const std::filesystem::path& path, const PromptFlow& flow);
/// Loads and verifies a DPF file; Y' is min-max normalized after loading.
/// Expected dims of 0 skip the compatibility check.
PromptFlow load_prompt_file(const std::filesystem::path& path, Index expect_h = 0, Index expect_w = 0);

/// Monotone distortion parameters of the synthetic relative depth.
struct OracleDistortion {
  double gain = 1.0;   // a > 0
  double gamma = 1.0;  // in [0.7, 1.3]
  double offset = 0.0;

  static OracleDistortion sample(std::uint64_t seed);
};

/// Synthetic stand-in for a depth foundation model.
///
/// Y' = minmax(a * GT^gamma + b). Features per stage are patch-averaged
/// stacks of (R, G, B, |grad luminance|, Y') mixed to C_p channels by a
/// seeded random matrix specific to the stage.
PromptFlow synthetic_prompt_oracle(const Scene& scene, std::uint64_t seed);
PromptFlow synthetic_prompt_oracle(const Scene& scene, std::uint64_t seed, const OracleDistortion& distortion);

/// Converts a directory of raw float32 arrays described by manifest.json
/// into DPF files. Returns the written paths.
///
/// manifest.json: {"patch_size": 14, "entries": [{"name", "height", "width",
/// "channels", "stages": [4 files], "relative_depth": file}]}
std::vector<std::filesystem::path> export_prompts(const std::filesystem::path& raw_dir,
                                                  const std::filesystem::path& out_dir);

}  // namespace ducos

#endif  // DUCOS_PROMPTS_HPP
