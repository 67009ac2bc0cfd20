#include "ducos/network.hpp"

#include "ducos/io.hpp"

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <random>
#include <set>
#include <sstream>

namespace ducos {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Dtype d) { return d == Dtype::f32 ? "f32" : "f64"; }

Dtype dtype_from_string(const std::string& name) {
  if (name == "f32" || name == "float32") return Dtype::f32;
  if (name == "f64" || name == "float64") return Dtype::f64;
  throw std::invalid_argument("unknown dtype '" + name + "'");
}

void ModelConfig::validate() const {
  if (channels < 1) throw std::invalid_argument("channels must be positive");
  if (resblocks < 0) throw std::invalid_argument("resblocks must be >= 0");
  if (iterations < 1) throw std::invalid_argument("iterations must be >= 1");
  if (prompt_channels < 1) throw std::invalid_argument("prompt_channels must be positive");
  if (patch_size < 1) throw std::invalid_argument("patch_size must be positive");
  if (deconv_kernel != 2 && deconv_kernel != 4) throw std::invalid_argument("deconv_kernel must be 2 or 4");
  if (!(depth_scale > 0)) throw std::invalid_argument("depth_scale must be positive");
}

FusionOptions ModelConfig::fusion_options() const {
  FusionOptions o;
  o.iterations = iterations;
  o.mode = fusion;
  o.h_shared = h_shared;
  o.patch_size = patch_size;
  return o;
}

Index fan_in(const Shape& weight_shape) { return weight_shape.at(1) * weight_shape.at(2) * weight_shape.at(3); }

double kaiming_bound(const Shape& weight_shape) { return 1.0 / std::sqrt(static_cast<double>(fan_in(weight_shape))); }

template <typename T>
DuCosModel<T>::DuCosModel(ModelConfig config) : config_(config), fusion_(config.fusion_options()) {
  config_.validate();
  head_ = ConvLayer<T>::make(1, config_.channels, 3);
  for (auto& s : stages_) {
    s = CFStage<T>::make(config_.channels, config_.prompt_channels, config_.resblocks, config_.deconv_kernel);
  }
  tail_ = ConvLayer<T>::make(config_.channels, 1, 3);
}

template <typename T>
void DuCosModel<T>::init_params(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& p : parameters()) {
    Vec<T>& v = p.tensor.mutable_values();
    if (p.tensor.rank() == 4) {
      const double bound = kaiming_bound(p.tensor.shape());
      std::uniform_real_distribution<double> u(-bound, bound);
      for (Index i = 0; i < v.size(); ++i) v[i] = static_cast<T>(u(rng));
    } else {
      v.setZero();
    }
    p.tensor.zero_grad();
  }
}

template <typename T>
std::vector<Parameter<T>> DuCosModel<T>::parameters() {
  std::vector<Parameter<T>> out;
  out.push_back({"head.weight", head_.weight});
  out.push_back({"head.bias", head_.bias});
  for (int i = 0; i < kStages; ++i) {
    stages_[static_cast<std::size_t>(i)].collect("stage" + std::to_string(i + 1) + ".", out, config_.fusion);
  }
  out.push_back({"tail.weight", tail_.weight});
  out.push_back({"tail.bias", tail_.bias});

  std::set<std::string> names;
  for (const auto& p : out) {
    if (!names.insert(p.name).second) throw std::logic_error("duplicate parameter name " + p.name);
  }
  return out;
}

template <typename T>
ForwardResult<T> DuCosModel<T>::forward(const Tensor<T>& x, const PromptFlow& prompts) const {
  prompts.validate();
  if (x.rank() != 3 || x.dim(0) != 1) throw ShapeError("model input must be [1,H,W], got " + shape_string(x.shape()));
  const Index h = x.dim(1);
  const Index w = x.dim(2);
  if (prompts.height() != h || prompts.width() != w) {
    throw ShapeError("relative depth " + shape_string(prompts.relative_depth.shape()) + " does not match input " +
                     shape_string(x.shape()));
  }
  if (prompts.patch_size != config_.patch_size) throw ShapeError("prompt patch size differs from the model's");
  if (prompts.channels() != config_.prompt_channels) {
    throw ShapeError("prompt has " + std::to_string(prompts.channels()) + " channels, model expects " +
                     std::to_string(config_.prompt_channels));
  }
  const Index p = config_.patch_size;
  const Index hp = patch_extent(h, static_cast<int>(p)) * p;
  const Index wp = patch_extent(w, static_cast<int>(p)) * p;

  ForwardResult<T> result;
  Tensor<T> d = head_(pad_replicate(x, hp - h, wp - w));
  for (int i = 0; i < kStages; ++i) {
    const Tensor<T> f = prompts.features[static_cast<std::size_t>(i)].template cast<T>();
    auto [next, trace] = cf_forward(stages_[static_cast<std::size_t>(i)], f, d, fusion_);
    d = next;
    result.traces.push_back(std::move(trace));
  }
  result.y = crop(tail_(d), h, w);
  return result;
}

template <typename T>
Raster<float> DuCosModel<T>::predict(const Raster<float>& x_meters, const PromptFlow& prompts) const {
  NoGradGuard guard;
  const Raster<T> xn = (x_meters.cast<double>() / config_.depth_scale).template cast<T>();
  const ForwardResult<T> r = forward(to_tensor(xn), prompts);
  return (to_raster(r.y).template cast<double>() * config_.depth_scale).template cast<float>();
}

namespace {

json config_json(const ModelConfig& c) {
  return {{"channels", c.channels},
          {"resblocks", c.resblocks},
          {"iterations", c.iterations},
          {"prompt_channels", c.prompt_channels},
          {"patch_size", c.patch_size},
          {"deconv_kernel", c.deconv_kernel},
          {"fusion", to_string(c.fusion)},
          {"h_shared", c.h_shared},
          {"depth_scale", c.depth_scale}};
}

ModelConfig config_from(const json& j) {
  static const std::set<std::string> known{"channels",      "resblocks", "iterations", "prompt_channels", "patch_size",
                                           "deconv_kernel", "fusion",    "h_shared",   "depth_scale"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw std::invalid_argument("unknown model config key '" + key + "'");
  }
  ModelConfig c;
  c.channels = j.value("channels", c.channels);
  c.resblocks = j.value("resblocks", c.resblocks);
  c.iterations = j.value("iterations", c.iterations);
  c.prompt_channels = j.value("prompt_channels", c.prompt_channels);
  c.patch_size = j.value("patch_size", c.patch_size);
  c.deconv_kernel = j.value("deconv_kernel", c.deconv_kernel);
  c.fusion = fusion_mode_from_string(j.value("fusion", to_string(c.fusion)));
  c.h_shared = j.value("h_shared", c.h_shared);
  c.depth_scale = j.value("depth_scale", c.depth_scale);
  c.validate();
  return c;
}

constexpr const char* kCheckpointMagic = "DUCOS-CKPT 1 ";

struct ParsedCheckpoint {
  CheckpointInfo info;
  std::span<const std::byte> payload;
};

ParsedCheckpoint parse_checkpoint(std::span<const std::byte> bytes, const fs::path& path) {
  const std::size_t magic_len = std::strlen(kCheckpointMagic);
  if (bytes.size() < magic_len || std::memcmp(bytes.data(), kCheckpointMagic, magic_len) != 0) {
    throw CorruptFileError("not a checkpoint: " + path.string());
  }
  std::size_t pos = magic_len;
  std::size_t header_len = 0;
  while (pos < bytes.size() && static_cast<char>(bytes[pos]) != '\n') {
    const char c = static_cast<char>(bytes[pos++]);
    if (c < '0' || c > '9') throw CorruptFileError("bad checkpoint preamble: " + path.string());
    header_len = header_len * 10 + static_cast<std::size_t>(c - '0');
  }
  ++pos;
  if (pos + header_len > bytes.size()) throw CorruptFileError("truncated checkpoint header: " + path.string());
  ParsedCheckpoint parsed;
  try {
    const auto* text = reinterpret_cast<const char*>(bytes.data()) + pos;
    const json header = json::parse(text, text + header_len);
    parsed.info.dtype = dtype_from_string(header.at("dtype").get<std::string>());
    parsed.info.config = config_from(header.at("config"));
    for (const auto& p : header.at("parameters")) {
      parsed.info.parameters.emplace_back(p.at("name").get<std::string>(), p.at("shape").get<Shape>());
    }
  } catch (const json::exception& e) {
    throw CorruptFileError("bad checkpoint header in " + path.string() + ": " + e.what());
  }
  parsed.payload = bytes.subspan(pos + header_len);
  return parsed;
}

}  // namespace

std::string model_config_to_json(const ModelConfig& config) { return config_json(config).dump(2); }

ModelConfig model_config_from_json(const std::string& text) { return config_from(json::parse(text)); }

template <typename T>
std::vector<std::byte> encode_checkpoint(const DuCosModel<T>& model) {
  constexpr Dtype dtype = std::is_same_v<T, float> ? Dtype::f32 : Dtype::f64;
  json params = json::array();
  std::vector<std::byte> payload;
  for (const auto& p : model.parameters()) {
    params.push_back({{"name", p.name}, {"shape", p.tensor.shape()}, {"offset", payload.size()}});
    const auto& v = p.tensor.values();
    if constexpr (std::is_same_v<T, float>) {
      append_f32_le(payload, std::span<const float>(v.data(), static_cast<std::size_t>(v.size())));
    } else {
      append_f64_le(payload, std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
    }
  }
  const json header = {{"format", "ducos-checkpoint"},
                       {"dtype", to_string(dtype)},
                       {"endianness", "little"},
                       {"config", config_json(model.config())},
                       {"parameters", params},
                       {"payload_bytes", payload.size()}};
  const std::string text = header.dump(1);
  const std::string preamble = kCheckpointMagic + std::to_string(text.size()) + "\n";
  std::vector<std::byte> bytes(preamble.size() + text.size());
  std::memcpy(bytes.data(), preamble.data(), preamble.size());
  std::memcpy(bytes.data() + preamble.size(), text.data(), text.size());
  bytes.insert(bytes.end(), payload.begin(), payload.end());
  return bytes;
}

template <typename T>
void save_checkpoint(const fs::path& path, const DuCosModel<T>& model) {
  write_file(path, encode_checkpoint(model));
}

CheckpointInfo read_checkpoint_info(const fs::path& path) {
  const auto bytes = read_file(path);
  return parse_checkpoint(bytes, path).info;
}

template <typename T>
DuCosModel<T> load_checkpoint(const fs::path& path) {
  const auto bytes = read_file(path);
  const ParsedCheckpoint parsed = parse_checkpoint(bytes, path);
  constexpr Dtype want = std::is_same_v<T, float> ? Dtype::f32 : Dtype::f64;
  if (parsed.info.dtype != want) {
    throw IncompatibleFileError("checkpoint " + path.string() + " holds " + to_string(parsed.info.dtype) +
                                " parameters, requested " + to_string(want));
  }
  DuCosModel<T> model(parsed.info.config);
  auto params = model.parameters();
  if (params.size() != parsed.info.parameters.size()) throw CorruptFileError("checkpoint parameter count mismatch");
  std::size_t offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, shape] = parsed.info.parameters[i];
    if (params[i].name != name || params[i].tensor.shape() != shape) {
      throw CorruptFileError("checkpoint parameter " + name + " does not match the model layout");
    }
    const std::size_t n = static_cast<std::size_t>(numel(shape)) * sizeof(T);
    if (offset + n > parsed.payload.size()) throw CorruptFileError("truncated checkpoint payload: " + path.string());
    const auto chunk = parsed.payload.subspan(offset, n);
    Vec<T>& v = params[i].tensor.mutable_values();
    if constexpr (std::is_same_v<T, float>) {
      const auto values = decode_f32_le(chunk);
      v = Eigen::Map<const Vec<float>>(values.data(), v.size());
    } else {
      const auto values = decode_f64_le(chunk);
      v = Eigen::Map<const Vec<double>>(values.data(), v.size());
    }
    offset += n;
  }
  if (offset != parsed.payload.size()) throw CorruptFileError("trailing bytes in checkpoint: " + path.string());
  return model;
}

template class DuCosModel<float>;
template class DuCosModel<double>;
template void save_checkpoint(const fs::path&, const DuCosModel<float>&);
template void save_checkpoint(const fs::path&, const DuCosModel<double>&);
template std::vector<std::byte> encode_checkpoint(const DuCosModel<float>&);
template std::vector<std::byte> encode_checkpoint(const DuCosModel<double>&);
template DuCosModel<float> load_checkpoint(const fs::path&);
template DuCosModel<double> load_checkpoint(const fs::path&);

}  // namespace ducos
