#ifndef DUCOS_FUSION_HPP
#define DUCOS_FUSION_HPP

#include "ducos/ops.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ducos {

/// Convolution parameters. `weight` is [Co,C,k,k] for conv and [C,Co,k,k]
/// for the transposed variant.
template <typename T>
struct ConvLayer {
  Tensor<T> weight;
  Tensor<T> bias;

  static ConvLayer make(Index in, Index out, Index k, bool transposed = false);
  Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, weight, bias); }
  Tensor<T> transposed(const Tensor<T>& x) const { return deconv2d(x, weight, bias); }
};

/// x + conv2(relu(conv1(x)))
template <typename T>
struct ResBlock {
  ConvLayer<T> conv1;
  ConvLayer<T> conv2;
};

/// Residual group: blocks, a closing 3x3 conv, and a long skip.
template <typename T>
struct ResGroup {
  std::vector<ResBlock<T>> blocks;
  ConvLayer<T> tail;

  Tensor<T> operator()(const Tensor<T>& x) const;
};

enum class FusionMode { correlative, addition, concatenation };

std::string to_string(FusionMode mode);
FusionMode fusion_mode_from_string(const std::string& name);

struct FusionOptions {
  int iterations = 3;
  FusionMode mode = FusionMode::correlative;
  bool h_shared = false;
  int patch_size = 14;
  /// Test hook: replaces sigmoid(r) by a constant gate.
  std::optional<double> forced_alpha;
};

/// One correlative-fusion stage.
template <typename T>
struct CFStage {
  ResGroup<T> resgroup;
  ConvLayer<T> prompt_proj;  // 1x1, C_p -> C
  ConvLayer<T> deconv;       // stride-2 transposed conv, C -> C
  ConvLayer<T> tau2;         // 3x3, C -> C
  ConvLayer<T> h_proj_d;     // 1x1, C -> 1
  ConvLayer<T> h_proj_f;     // 1x1, C -> 1
  ConvLayer<T> concat_proj;  // 1x1, 2C -> C; concatenation baseline only

  static CFStage make(Index channels, Index prompt_channels, int resblocks, Index deconv_kernel);
  void collect(const std::string& prefix, std::vector<Parameter<T>>& out, FusionMode mode);
};

/// Internals of one stage forward, for the alignment loss and inspection.
template <typename T>
struct FusionTrace {
  std::vector<Vec<T>> r;      // per iteration, [C]
  std::vector<Vec<T>> alpha;  // per iteration, [C]
  Tensor<T> fused;            // final iteration
  Tensor<T> prompt;           // resized prompt feature
  Tensor<T> h_d;              // [1,H,W] in [0,1]
  Tensor<T> h_f;              // [1,H,W] in [0,1]
};

inline constexpr double kPccMinStd = 1e-6;

/// Per-channel Pearson correlation over the spatial positions of two
/// [C,H,W] tensors, clamped to [-1,1]. Channels where either input has
/// standard deviation below 1e-6 report 0.
template <typename T>
Tensor<T> pcc_per_channel(const Tensor<T>& f, const Tensor<T>& d);

/// alpha = sigmoid(r), beta = 1 - alpha.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> gate(const Tensor<T>& r);

/// Deconvolution plus bilinear resize of a projected prompt to (h, w).
template <typename T>
Tensor<T> resize_prompt(const CFStage<T>& stage, const Tensor<T>& prompt, Index h, Index w);

/// Full stage: returns the next depth feature and the fusion trace.
template <typename T>
std::pair<Tensor<T>, FusionTrace<T>> cf_forward(const CFStage<T>& stage, const Tensor<T>& prompt,
                                                const Tensor<T>& depth, const FusionOptions& options);

}  // namespace ducos

#endif  // DUCOS_FUSION_HPP
