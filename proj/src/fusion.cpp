#include "ducos/fusion.hpp"

#include "ducos/image_ops.hpp"

#include <stdexcept>

namespace ducos {

template <typename T>
ConvLayer<T> ConvLayer<T>::make(Index in, Index out, Index k, bool transposed) {
  ConvLayer layer;
  layer.weight = Tensor<T>(transposed ? Shape{in, out, k, k} : Shape{out, in, k, k});
  layer.weight.set_requires_grad(true);
  layer.bias = Tensor<T>(Shape{out});
  layer.bias.set_requires_grad(true);
  return layer;
}

template <typename T>
Tensor<T> ResGroup<T>::operator()(const Tensor<T>& x) const {
  Tensor<T> h = x;
  for (const auto& block : blocks) h = h + block.conv2(relu(block.conv1(h)));
  return x + tail(h);
}

std::string to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::correlative: return "correlative";
    case FusionMode::addition: return "addition";
    case FusionMode::concatenation: return "concatenation";
  }
  return "correlative";
}

FusionMode fusion_mode_from_string(const std::string& name) {
  if (name == "correlative") return FusionMode::correlative;
  if (name == "addition") return FusionMode::addition;
  if (name == "concatenation") return FusionMode::concatenation;
  throw std::invalid_argument("unknown fusion mode '" + name + "'");
}

template <typename T>
CFStage<T> CFStage<T>::make(Index channels, Index prompt_channels, int resblocks, Index deconv_kernel) {
  CFStage s;
  for (int b = 0; b < resblocks; ++b) {
    s.resgroup.blocks.push_back({ConvLayer<T>::make(channels, channels, 3), ConvLayer<T>::make(channels, channels, 3)});
  }
  s.resgroup.tail = ConvLayer<T>::make(channels, channels, 3);
  s.prompt_proj = ConvLayer<T>::make(prompt_channels, channels, 1);
  s.deconv = ConvLayer<T>::make(channels, channels, deconv_kernel, true);
  s.tau2 = ConvLayer<T>::make(channels, channels, 3);
  s.h_proj_d = ConvLayer<T>::make(channels, 1, 1);
  s.h_proj_f = ConvLayer<T>::make(channels, 1, 1);
  s.concat_proj = ConvLayer<T>::make(2 * channels, channels, 1);
  return s;
}

template <typename T>
void CFStage<T>::collect(const std::string& prefix, std::vector<Parameter<T>>& out, FusionMode mode) {
  auto add = [&](const std::string& name, ConvLayer<T>& layer) {
    out.push_back({prefix + name + ".weight", layer.weight});
    out.push_back({prefix + name + ".bias", layer.bias});
  };
  for (std::size_t b = 0; b < resgroup.blocks.size(); ++b) {
    add("resgroup.block" + std::to_string(b) + ".conv1", resgroup.blocks[b].conv1);
    add("resgroup.block" + std::to_string(b) + ".conv2", resgroup.blocks[b].conv2);
  }
  add("resgroup.tail", resgroup.tail);
  add("prompt_proj", prompt_proj);
  add("deconv", deconv);
  add("tau2", tau2);
  add("h_proj_d", h_proj_d);
  add("h_proj_f", h_proj_f);
  if (mode == FusionMode::concatenation) add("concat_proj", concat_proj);
}

template <typename T>
Tensor<T> pcc_per_channel(const Tensor<T>& f, const Tensor<T>& d) {
  if (f.shape() != d.shape()) {
    throw ShapeError("pcc_per_channel shape mismatch: " + shape_string(f.shape()) + " vs " + shape_string(d.shape()));
  }
  if (f.rank() != 3) throw ShapeError("pcc_per_channel expects [C,H,W]");
  if (f.dim(1) * f.dim(2) < 2) throw ShapeError("pcc_per_channel needs at least two positions");

  const std::vector<int> spatial{1, 2};
  const Tensor<T> fc = f - mean(f, spatial);
  const Tensor<T> dc = d - mean(d, spatial);
  const Tensor<T> cov = sum(fc * dc, spatial);
  const Tensor<T> vf = sum(square(fc), spatial);
  const Tensor<T> vd = sum(square(dc), spatial);

  // Zero-variance channels: the gate falls back to 0.5 / 0.5.
  const T n = static_cast<T>(f.dim(1) * f.dim(2));
  const T min_var = static_cast<T>(kPccMinStd * kPccMinStd) * n;
  Vec<T> keep = ((vf.values() >= min_var) && (vd.values() >= min_var)).template cast<T>();
  const Tensor<T> keep_t({f.dim(0)}, keep);
  const Tensor<T> fill({f.dim(0)}, Vec<T>(T(1) - keep));

  const Tensor<T> denom = ducos::sqrt(vf * vd) * keep_t + fill;
  return clamp(cov * keep_t / denom, T(-1), T(1));
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> gate(const Tensor<T>& r) {
  Tensor<T> alpha = sigmoid(r);
  Tensor<T> beta = T(1) - alpha;
  return {alpha, beta};
}

template <typename T>
Tensor<T> resize_prompt(const CFStage<T>& stage, const Tensor<T>& prompt, Index h, Index w) {
  return resize_bilinear(stage.deconv.transposed(stage.prompt_proj(prompt)), h, w);
}

template <typename T>
std::pair<Tensor<T>, FusionTrace<T>> cf_forward(const CFStage<T>& stage, const Tensor<T>& prompt,
                                                const Tensor<T>& depth, const FusionOptions& options) {
  if (options.iterations < 1) throw std::invalid_argument("fusion iterations must be >= 1");
  if (depth.rank() != 3 || prompt.rank() != 3) throw ShapeError("cf_forward expects [C,H,W] inputs");
  const Index h = depth.dim(1);
  const Index w = depth.dim(2);
  const Index p = options.patch_size;
  if (prompt.dim(1) != (h + p - 1) / p || prompt.dim(2) != (w + p - 1) / p) {
    throw ShapeError("prompt " + shape_string(prompt.shape()) + " inconsistent with depth " + shape_string(depth.shape()) +
                     " at patch size " + std::to_string(p));
  }

  FusionTrace<T> trace;
  const Tensor<T> f_hat = resize_prompt(stage, prompt, h, w);
  Tensor<T> fused = depth;
  for (int it = 0; it < options.iterations; ++it) {
    const Tensor<T> d_hat = stage.resgroup(it == 0 ? depth : fused);
    switch (options.mode) {
      case FusionMode::correlative: {
        const Tensor<T> r = pcc_per_channel(f_hat, d_hat);
        Tensor<T> alpha;
        Tensor<T> beta;
        if (options.forced_alpha) {
          alpha = Tensor<T>::constant({depth.dim(0)}, static_cast<T>(*options.forced_alpha));
          beta = Tensor<T>::constant({depth.dim(0)}, static_cast<T>(1.0 - *options.forced_alpha));
        } else {
          std::tie(alpha, beta) = gate(r);
        }
        trace.r.push_back(r.values());
        trace.alpha.push_back(alpha.values());
        fused = f_hat * alpha + d_hat * beta;
        break;
      }
      case FusionMode::addition:
        fused = f_hat + d_hat;
        break;
      case FusionMode::concatenation:
        fused = stage.concat_proj(concat_channels(f_hat, d_hat));
        break;
    }
  }
  trace.fused = fused;
  trace.prompt = f_hat;
  trace.h_d = minmax_normalize(stage.h_proj_d(fused));
  trace.h_f = minmax_normalize(options.h_shared ? stage.h_proj_d(f_hat) : stage.h_proj_f(f_hat));
  return {stage.tau2(fused), std::move(trace)};
}

#define DUCOS_INSTANTIATE_FUSION(T)                                                                   \
  template struct ConvLayer<T>;                                                                       \
  template struct ResGroup<T>;                                                                        \
  template struct CFStage<T>;                                                                         \
  template Tensor<T> pcc_per_channel(const Tensor<T>&, const Tensor<T>&);                             \
  template std::pair<Tensor<T>, Tensor<T>> gate(const Tensor<T>&);                                    \
  template Tensor<T> resize_prompt(const CFStage<T>&, const Tensor<T>&, Index, Index);                \
  template std::pair<Tensor<T>, FusionTrace<T>> cf_forward(const CFStage<T>&, const Tensor<T>&,       \
                                                           const Tensor<T>&, const FusionOptions&);

DUCOS_INSTANTIATE_FUSION(float)
DUCOS_INSTANTIATE_FUSION(double)

}  // namespace ducos
