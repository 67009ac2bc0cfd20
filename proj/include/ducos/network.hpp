#ifndef DUCOS_NETWORK_HPP
#define DUCOS_NETWORK_HPP

#include "ducos/fusion.hpp"
#include "ducos/prompts.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ducos {

enum class Dtype { f32, f64 };

std::string to_string(Dtype d);
Dtype dtype_from_string(const std::string& name);

struct ModelConfig {
  Index channels = 32;
  int resblocks = 2;
  int iterations = 3;
  Index prompt_channels = kOraclePromptChannels;
  int patch_size = kPatchSize;
  Index deconv_kernel = 4;
  FusionMode fusion = FusionMode::correlative;
  bool h_shared = false;
  /// Depth is divided by this before entering the network and the
  /// prediction multiplied back (metres).
  double depth_scale = 10.0;

  void validate() const;
  FusionOptions fusion_options() const;
  bool operator==(const ModelConfig&) const = default;
};

template <typename T>
struct ForwardResult {
  Tensor<T> y;  // [1,H,W], normalized depth units
  std::vector<FusionTrace<T>> traces;
};

/// Depth head, four correlative-fusion stages and a depth tail.
template <typename T>
class DuCosModel {
 public:
  static constexpr int kStages = 4;

  explicit DuCosModel(ModelConfig config = {});

  const ModelConfig& config() const { return config_; }
  FusionOptions& fusion_options() { return fusion_; }

  /// Kaiming-uniform fan-in weights (negative slope sqrt(5), the usual conv
  /// default: bound 1/sqrt(fan_in)) and zero biases.
  void init_params(std::uint64_t seed);

  /// Named parameters in a fixed order; names are unique.
  std::vector<Parameter<T>> parameters();
  std::vector<Parameter<T>> parameters() const { return const_cast<DuCosModel*>(this)->parameters(); }

  /// `x` is the bicubic-upsampled input [1,H,W] in normalized depth units.
  /// Inputs are replicate-padded to a multiple of the patch size and the
  /// prediction cropped back.
  ForwardResult<T> forward(const Tensor<T>& x, const PromptFlow& prompts) const;

  /// Convenience inference in metres, without recording a graph.
  Raster<float> predict(const Raster<float>& x_meters, const PromptFlow& prompts) const;

  ConvLayer<T>& head() { return head_; }
  ConvLayer<T>& tail() { return tail_; }
  std::array<CFStage<T>, kStages>& stages() { return stages_; }

 private:
  ModelConfig config_;
  FusionOptions fusion_;
  ConvLayer<T> head_;
  std::array<CFStage<T>, kStages> stages_;
  ConvLayer<T> tail_;
};

/// Kaiming fan-in of a weight tensor: dim(1) * k * k.
Index fan_in(const Shape& weight_shape);
/// U(-b, b) bound of the weight init: 1/sqrt(fan_in).
double kaiming_bound(const Shape& weight_shape);

// Checkpoint file: first line "DUCOS-CKPT 1 <header bytes>", then a JSON
// descriptor {dtype, config, parameters: [{name, shape, offset}]}, then the
// little-endian parameter bytes in descriptor order.
struct CheckpointInfo {
  Dtype dtype = Dtype::f32;
  ModelConfig config;
  std::vector<std::pair<std::string, Shape>> parameters;
};

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const DuCosModel<T>& model);
template <typename T>
std::vector<std::byte> encode_checkpoint(const DuCosModel<T>& model);

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);
/// Throws IncompatibleFileError when the file dtype differs from T.
template <typename T>
DuCosModel<T> load_checkpoint(const std::filesystem::path& path);

std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace ducos

#endif  // DUCOS_NETWORK_HPP
