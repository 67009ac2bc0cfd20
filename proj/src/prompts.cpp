#include "ducos/prompts.hpp"

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <random>

namespace ducos {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'D', 'P', 'F', '1'};

Tensor<float> normalized_relative_depth(const Tensor<float>& y) {
  Raster<float> r = minmax_normalize(to_raster(y));
  return to_tensor(r);
}

// Mean of each p x p patch (partial patches at the far borders).
Raster<double> patch_pool(const Raster<double>& x, int p) {
  const Index ph = patch_extent(x.rows(), p);
  const Index pw = patch_extent(x.cols(), p);
  Raster<double> out(ph, pw);
  for (Index py = 0; py < ph; ++py)
    for (Index px = 0; px < pw; ++px) {
      const Index y0 = py * p;
      const Index x0 = px * p;
      const Index hh = std::min<Index>(p, x.rows() - y0);
      const Index ww = std::min<Index>(p, x.cols() - x0);
      out(py, px) = x.block(y0, x0, hh, ww).mean();
    }
  return out;
}

}  // namespace

void PromptFlow::validate() const {
  if (static_cast<int>(features.size()) != kPromptStages) {
    throw ShapeError("prompt flow needs exactly 4 stages, got " + std::to_string(features.size()));
  }
  if (!relative_depth.defined() || relative_depth.rank() != 3 || relative_depth.dim(0) != 1) {
    throw ShapeError("relative depth must be [1,H,W]");
  }
  const Index ph = patch_extent(height(), patch_size);
  const Index pw = patch_extent(width(), patch_size);
  for (const auto& f : features) {
    if (!f.defined() || f.rank() != 3 || f.dim(0) != features.front().dim(0) || f.dim(1) != ph || f.dim(2) != pw) {
      throw ShapeError("prompt feature " + (f.defined() ? shape_string(f.shape()) : std::string("<none>")) +
                       " does not match [C_p," + std::to_string(ph) + "," + std::to_string(pw) + "]");
    }
  }
}

std::vector<std::byte> encode_prompt_file(const PromptFlow& flow) {
  flow.validate();
  std::vector<std::byte> payload;
  json stage_shapes = json::array();
  for (const auto& f : flow.features) {
    append_f32_le(payload, std::span<const float>(f.values().data(), static_cast<std::size_t>(f.numel())));
    stage_shapes.push_back(f.shape());
  }
  const auto& y = flow.relative_depth.values();
  append_f32_le(payload, std::span<const float>(y.data(), static_cast<std::size_t>(y.size())));

  const json header = {{"p", flow.patch_size},    {"C_p", flow.channels()}, {"H", flow.height()},
                       {"W", flow.width()},       {"dtype", "float32"},     {"stage_shapes", stage_shapes},
                       {"checksum", crc32(payload)}};
  const std::string text = header.dump();
  std::vector<std::byte> bytes(4);
  std::memcpy(bytes.data(), kMagic, 4);
  append_u32_le(bytes, static_cast<std::uint32_t>(text.size()));
  const auto* t = reinterpret_cast<const std::byte*>(text.data());
  bytes.insert(bytes.end(), t, t + text.size());
  bytes.insert(bytes.end(), payload.begin(), payload.end());
  return bytes;
}

PromptFlow decode_prompt_file(std::span<const std::byte> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw CorruptFileError("bad DPF magic");
  const std::uint32_t len = decode_u32_le(bytes.subspan(4, 4));
  if (bytes.size() < 8 + static_cast<std::size_t>(len)) throw CorruptFileError("truncated DPF header");
  json header;
  try {
    const auto* text = reinterpret_cast<const char*>(bytes.data()) + 8;
    header = json::parse(text, text + len);
  } catch (const json::exception& e) {
    throw CorruptFileError(std::string("bad DPF descriptor: ") + e.what());
  }
  const auto payload = bytes.subspan(8 + len);
  try {
    if (crc32(payload) != header.at("checksum").get<std::uint32_t>()) throw CorruptFileError("DPF checksum mismatch");
    if (header.at("dtype").get<std::string>() != "float32") throw IncompatibleFileError("DPF dtype must be float32");

    PromptFlow flow;
    flow.source = PromptSource::file;
    flow.patch_size = header.at("p").get<int>();
    const Index h = header.at("H").get<Index>();
    const Index w = header.at("W").get<Index>();
    const auto values = decode_f32_le(payload);
    std::size_t at = 0;
    auto take = [&](const Shape& shape) {
      const auto n = static_cast<std::size_t>(numel(shape));
      if (at + n > values.size()) throw CorruptFileError("DPF payload shorter than its descriptor");
      Tensor<float> t(shape, Eigen::Map<const Vec<float>>(values.data() + at, static_cast<Index>(n)));
      at += n;
      return t;
    };
    for (const auto& s : header.at("stage_shapes")) flow.features.push_back(take(s.get<Shape>()));
    flow.relative_depth = take({1, h, w});
    if (at != values.size()) throw CorruptFileError("DPF payload longer than its descriptor");
    flow.validate();
    if (flow.channels() != header.at("C_p").get<Index>()) throw CorruptFileError("DPF C_p disagrees with stage shapes");
    return flow;
  } catch (const json::exception& e) {
    throw CorruptFileError(std::string("bad DPF descriptor: ") + e.what());
  } catch (const ShapeError& e) {
    throw CorruptFileError(std::string("inconsistent DPF shapes: ") + e.what());
  }
}

void write_prompt_file(const fs::path& path, const PromptFlow& flow) { write_file(path, encode_prompt_file(flow)); }

PromptFlow load_prompt_file(const fs::path& path, Index expect_h, Index expect_w) {
  PromptFlow flow = decode_prompt_file(read_file(path));
  if ((expect_h && flow.height() != expect_h) || (expect_w && flow.width() != expect_w)) {
    throw IncompatibleFileError("prompt file " + path.string() + " is " + std::to_string(flow.height()) + "x" +
                                std::to_string(flow.width()) + ", expected " + std::to_string(expect_h) + "x" +
                                std::to_string(expect_w));
  }
  flow.relative_depth = normalized_relative_depth(flow.relative_depth);
  return flow;
}

OracleDistortion OracleDistortion::sample(std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9E3779B97F4A7C15ull);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  OracleDistortion d;
  d.gain = 0.5 + 1.5 * u(rng);
  d.gamma = 0.7 + 0.6 * u(rng);
  d.offset = -1.0 + 2.0 * u(rng);
  return d;
}

PromptFlow synthetic_prompt_oracle(const Scene& scene, std::uint64_t seed) {
  return synthetic_prompt_oracle(scene, seed, OracleDistortion::sample(seed));
}

PromptFlow synthetic_prompt_oracle(const Scene& scene, std::uint64_t seed, const OracleDistortion& distortion) {
  if (!(distortion.gain > 0)) throw std::invalid_argument("oracle gain must be positive");
  const Index h = scene.height();
  const Index w = scene.width();

  const Raster<double> gt = scene.gt_depth.cast<double>();
  Raster<double> rel = gt.max(0.0).pow(distortion.gamma) * distortion.gain + distortion.offset;
  rel = minmax_normalize(rel);

  PromptFlow flow;
  flow.source = PromptSource::oracle;
  flow.relative_depth = to_tensor(Raster<float>(rel.cast<float>()));

  const Tensor<double> lum = to_tensor(Raster<double>(scene.luminance().cast<double>()));
  Tensor<double> grad;
  {
    NoGradGuard guard;
    grad = gradient_magnitude(lum);
  }
  std::vector<Raster<double>> stack{patch_pool(scene.rgb[0].cast<double>(), kPatchSize),
                                    patch_pool(scene.rgb[1].cast<double>(), kPatchSize),
                                    patch_pool(scene.rgb[2].cast<double>(), kPatchSize),
                                    patch_pool(to_raster(grad), kPatchSize), patch_pool(rel, kPatchSize)};
  const Index ph = patch_extent(h);
  const Index pw = patch_extent(w);
  const auto inputs = static_cast<Index>(stack.size());

  for (int stage = 0; stage < kPromptStages; ++stage) {
    std::mt19937_64 rng(seed * 4 + static_cast<std::uint64_t>(stage) + 1);
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(inputs)));
    RowMatrix<double> mix(kOraclePromptChannels, inputs);
    for (Index i = 0; i < mix.size(); ++i) mix.data()[i] = normal(rng);

    RowMatrix<double> pooled(inputs, ph * pw);
    for (Index k = 0; k < inputs; ++k) {
      pooled.row(k) = Eigen::Map<const Eigen::RowVectorXd>(stack[static_cast<std::size_t>(k)].data(), ph * pw);
    }
    const RowMatrix<double> mixed = mix * pooled;
    Vec<float> values = Eigen::Map<const Vec<double>>(mixed.data(), mixed.size()).cast<float>();
    flow.features.emplace_back(Shape{kOraclePromptChannels, ph, pw}, std::move(values));
  }
  flow.validate();
  return flow;
}

std::vector<fs::path> export_prompts(const fs::path& raw_dir, const fs::path& out_dir) {
  json manifest;
  try {
    const auto bytes = read_file(raw_dir / "manifest.json");
    const auto* text = reinterpret_cast<const char*>(bytes.data());
    manifest = json::parse(text, text + bytes.size());
  } catch (const json::exception& e) {
    throw CorruptFileError(std::string("bad prompt manifest: ") + e.what());
  }

  std::vector<fs::path> written;
  try {
    const int p = manifest.value("patch_size", kPatchSize);
    for (const auto& entry : manifest.at("entries")) {
      const auto name = entry.at("name").get<std::string>();
      const Index h = entry.at("height").get<Index>();
      const Index w = entry.at("width").get<Index>();
      const Index c = entry.at("channels").get<Index>();
      auto load = [&](const std::string& file, const Shape& shape) {
        const auto values = decode_f32_le(read_file(raw_dir / file));
        if (static_cast<Index>(values.size()) != numel(shape)) {
          throw IncompatibleFileError("raw array " + file + " holds " + std::to_string(values.size()) +
                                      " values, manifest declares " + shape_string(shape));
        }
        return Tensor<float>(shape, Eigen::Map<const Vec<float>>(values.data(), static_cast<Index>(values.size())));
      };
      PromptFlow flow;
      flow.source = PromptSource::file;
      flow.patch_size = p;
      const auto& stages = entry.at("stages");
      if (stages.size() != kPromptStages) throw IncompatibleFileError("entry " + name + " must list 4 stages");
      for (const auto& s : stages) flow.features.push_back(load(s.get<std::string>(), {c, patch_extent(h, p), patch_extent(w, p)}));
      flow.relative_depth = load(entry.at("relative_depth").get<std::string>(), {1, h, w});
      const fs::path out = out_dir / (name + ".dpf");
      write_prompt_file(out, flow);
      written.push_back(out);
    }
  } catch (const json::exception& e) {
    throw IncompatibleFileError(std::string("bad prompt manifest: ") + e.what());
  }
  return written;
}

}  // namespace ducos
