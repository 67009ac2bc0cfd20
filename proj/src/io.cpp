#include "ducos/io.hpp"

#include <json.hpp>
#include <zlib.h>

#include <bit>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ducos {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename U>
U byteswap(U v) {
  static_assert(std::is_trivially_copyable_v<U>);
  auto bytes = std::bit_cast<std::array<std::byte, sizeof(U)>>(v);
  std::reverse(bytes.begin(), bytes.end());
  return std::bit_cast<U>(bytes);
}

template <typename U>
void append_le(std::vector<std::byte>& out, std::span<const U> values) {
  const std::size_t at = out.size();
  out.resize(at + values.size_bytes());
  if constexpr (std::endian::native == std::endian::little) {
    if (!values.empty()) std::memcpy(out.data() + at, values.data(), values.size_bytes());
  } else {
    for (std::size_t i = 0; i < values.size(); ++i) {
      const U v = byteswap(values[i]);
      std::memcpy(out.data() + at + i * sizeof(U), &v, sizeof(U));
    }
  }
}

template <typename U>
std::vector<U> decode_le(std::span<const std::byte> bytes) {
  if (bytes.size() % sizeof(U) != 0) throw CorruptFileError("payload size is not a multiple of the element size");
  std::vector<U> out(bytes.size() / sizeof(U));
  if (!out.empty()) std::memcpy(out.data(), bytes.data(), bytes.size());
  if constexpr (std::endian::native != std::endian::little) {
    for (U& v : out) v = byteswap(v);
  }
  return out;
}

// Parses "P5\n[# comments\n]W H\nMAXVAL\n" and returns the payload offset.
struct PgmHeader {
  Index width = 0, height = 0;
  int maxval = 0;
  std::vector<std::string> comments;
  std::size_t offset = 0;
};

PgmHeader parse_pgm_header(const std::vector<std::byte>& bytes, const fs::path& path) {
  PgmHeader h;
  std::size_t pos = 0;
  auto peek = [&]() -> int { return pos < bytes.size() ? static_cast<int>(bytes[pos]) : -1; };
  auto skip_space_and_comments = [&]() {
    while (true) {
      const int c = peek();
      if (c == '#') {
        std::string line;
        ++pos;
        while (peek() != -1 && peek() != '\n') line.push_back(static_cast<char>(bytes[pos++]));
        h.comments.push_back(line);
      } else if (c == ' ' || c == '\n' || c == '\r' || c == '\t') {
        ++pos;
      } else {
        return;
      }
    }
  };
  auto read_int = [&]() {
    skip_space_and_comments();
    long v = 0;
    int digits = 0;
    while (peek() >= '0' && peek() <= '9') {
      v = v * 10 + (peek() - '0');
      ++pos;
      ++digits;
    }
    if (!digits) throw CorruptFileError("malformed PGM header in " + path.string());
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != std::byte{'P'} || bytes[1] != std::byte{'5'}) {
    throw CorruptFileError("not a binary PGM: " + path.string());
  }
  pos = 2;
  h.width = read_int();
  h.height = read_int();
  h.maxval = static_cast<int>(read_int());
  if (peek() == -1) throw CorruptFileError("truncated PGM: " + path.string());
  ++pos;  // single whitespace before raster
  h.offset = pos;
  return h;
}

std::vector<std::byte> to_bytes(const std::string& s) {
  std::vector<std::byte> out(s.size());
  std::memcpy(out.data(), s.data(), s.size());
  return out;
}

}  // namespace

std::uint32_t crc32(std::span<const std::byte> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - pos, 1u << 30));
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + pos), chunk);
    pos += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::byte> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw fs::filesystem_error("cannot open", path, std::error_code(errno, std::generic_category()));
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::byte> out(size);
  in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(size));
  if (!in) throw std::runtime_error("short read on " + path.string());
  return out;
}

void write_file(const fs::path& path, std::span<const std::byte> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed on " + tmp.string());
  }
  fs::rename(tmp, path);
}

void append_f32_le(std::vector<std::byte>& out, std::span<const float> values) { append_le(out, values); }
void append_f64_le(std::vector<std::byte>& out, std::span<const double> values) { append_le(out, values); }
std::vector<float> decode_f32_le(std::span<const std::byte> bytes) { return decode_le<float>(bytes); }
std::vector<double> decode_f64_le(std::span<const std::byte> bytes) { return decode_le<double>(bytes); }

void append_u32_le(std::vector<std::byte>& out, std::uint32_t v) {
  append_le(out, std::span<const std::uint32_t>(&v, 1));
}

std::uint32_t decode_u32_le(std::span<const std::byte> bytes) {
  if (bytes.size() < 4) throw CorruptFileError("truncated integer field");
  return decode_le<std::uint32_t>(bytes.first(4))[0];
}

Raster<float> Pgm16::meters() const { return (samples.cast<double>() * scale_to_meters).cast<float>(); }

Pgm16 Pgm16::from_meters(const Raster<float>& depth, double scale_to_meters) {
  if (!(scale_to_meters > 0)) throw std::invalid_argument("scale_to_meters must be positive");
  Pgm16 p;
  p.scale_to_meters = scale_to_meters;
  p.samples = depth.cast<double>()
                  .unaryExpr([scale_to_meters](double m) {
                    return std::clamp(std::round(m / scale_to_meters), 0.0, 65535.0);
                  })
                  .cast<std::uint16_t>();
  return p;
}

void write_pgm16(const fs::path& path, const Pgm16& image) {
  std::ostringstream head;
  head.precision(17);
  head << "P5\n# scale_to_meters=" << image.scale_to_meters << "\n"
       << image.samples.cols() << ' ' << image.samples.rows() << "\n65535\n";
  std::vector<std::byte> bytes = to_bytes(head.str());
  for (Index i = 0; i < image.samples.size(); ++i) {
    const std::uint16_t v = image.samples.data()[i];
    bytes.push_back(static_cast<std::byte>(v >> 8));
    bytes.push_back(static_cast<std::byte>(v & 0xFF));
  }
  write_file(path, bytes);
}

Pgm16 read_pgm16(const fs::path& path) {
  const auto bytes = read_file(path);
  const PgmHeader h = parse_pgm_header(bytes, path);
  if (h.maxval <= 255 || h.maxval > 65535) throw IncompatibleFileError("not a 16-bit PGM: " + path.string());
  const auto n = static_cast<std::size_t>(h.width * h.height);
  if (bytes.size() - h.offset < 2 * n) throw CorruptFileError("truncated PGM raster: " + path.string());
  Pgm16 p;
  p.samples.resize(h.height, h.width);
  for (std::size_t i = 0; i < n; ++i) {
    p.samples.data()[i] = static_cast<std::uint16_t>((static_cast<unsigned>(bytes[h.offset + 2 * i]) << 8) |
                                                     static_cast<unsigned>(bytes[h.offset + 2 * i + 1]));
  }
  bool found = false;
  for (const std::string& c : h.comments) {
    const auto at = c.find("scale_to_meters=");
    if (at != std::string::npos) {
      p.scale_to_meters = std::stod(c.substr(at + 16));
      found = true;
    }
  }
  if (!found) throw IncompatibleFileError("PGM lacks a scale_to_meters comment: " + path.string());
  return p;
}

void write_pgm8(const fs::path& path, const Raster<std::uint8_t>& image) {
  std::ostringstream head;
  head << "P5\n" << image.cols() << ' ' << image.rows() << "\n255\n";
  std::vector<std::byte> bytes = to_bytes(head.str());
  const auto at = bytes.size();
  bytes.resize(at + static_cast<std::size_t>(image.size()));
  std::memcpy(bytes.data() + at, image.data(), static_cast<std::size_t>(image.size()));
  write_file(path, bytes);
}

Raster<std::uint8_t> read_pgm8(const fs::path& path) {
  const auto bytes = read_file(path);
  const PgmHeader h = parse_pgm_header(bytes, path);
  if (h.maxval > 255) throw IncompatibleFileError("not an 8-bit PGM: " + path.string());
  const auto n = static_cast<std::size_t>(h.width * h.height);
  if (bytes.size() - h.offset < n) throw CorruptFileError("truncated PGM raster: " + path.string());
  Raster<std::uint8_t> out(h.height, h.width);
  std::memcpy(out.data(), bytes.data() + h.offset, n);
  return out;
}

void write_raw_f32(const fs::path& path, const Shape& shape, std::span<const float> values) {
  if (numel(shape) != static_cast<Index>(values.size())) throw ShapeError("raw payload does not match its shape");
  std::vector<std::byte> bytes;
  append_f32_le(bytes, values);
  write_file(path, bytes);
  const json sidecar = {{"shape", shape}, {"dtype", "float32"}, {"endianness", "little"}};
  fs::path side = path;
  side += ".json";
  write_file(side, to_bytes(sidecar.dump(2) + "\n"));
}

Tensor<float> read_raw_f32(const fs::path& path) {
  fs::path side = path;
  side += ".json";
  json meta;
  try {
    const auto text = read_file(side);
    meta = json::parse(reinterpret_cast<const char*>(text.data()), reinterpret_cast<const char*>(text.data()) + text.size());
  } catch (const json::exception& e) {
    throw CorruptFileError("bad sidecar " + side.string() + ": " + e.what());
  }
  if (meta.value("dtype", "") != "float32") throw IncompatibleFileError("sidecar dtype must be float32: " + side.string());
  const Shape shape = meta.at("shape").get<Shape>();
  const auto values = decode_f32_le(read_file(path));
  if (static_cast<Index>(values.size()) != numel(shape)) {
    throw CorruptFileError("raw payload of " + path.string() + " holds " + std::to_string(values.size()) +
                           " values, sidecar declares " + shape_string(shape));
  }
  return Tensor<float>(shape, Eigen::Map<const Vec<float>>(values.data(), static_cast<Index>(values.size())));
}

void write_scene(const fs::path& path, const Scene& scene) {
  const Index h = scene.height();
  const Index w = scene.width();
  std::vector<std::byte> payload;
  auto put = [&payload](const Raster<float>& r) { append_f32_le(payload, std::span<const float>(r.data(), static_cast<std::size_t>(r.size()))); };
  put(scene.gt_depth);
  for (const auto& c : scene.rgb) put(c);
  put(scene.discontinuity.cast<float>());
  put(scene.primitive_id.cast<float>());

  const json header = {{"format", "ducos-scene"},
                       {"version", 1},
                       {"height", h},
                       {"width", w},
                       {"seed", scene.seed},
                       {"channels", {"depth", "r", "g", "b", "discontinuity", "primitive_id"}},
                       {"units", "meters"},
                       {"crc32", crc32(payload)}};
  const std::string text = header.dump();
  std::vector<std::byte> bytes = to_bytes("DSN1");
  append_u32_le(bytes, static_cast<std::uint32_t>(text.size()));
  const auto head = to_bytes(text);
  bytes.insert(bytes.end(), head.begin(), head.end());
  bytes.insert(bytes.end(), payload.begin(), payload.end());
  write_file(path, bytes);
}

Scene read_scene(const fs::path& path) {
  const auto bytes = read_file(path);
  if (bytes.size() < 8 || std::memcmp(bytes.data(), "DSN1", 4) != 0) throw CorruptFileError("bad scene magic: " + path.string());
  const std::uint32_t len = decode_u32_le(std::span(bytes).subspan(4, 4));
  if (bytes.size() < 8 + static_cast<std::size_t>(len)) throw CorruptFileError("truncated scene header: " + path.string());
  json header;
  try {
    header = json::parse(reinterpret_cast<const char*>(bytes.data()) + 8, reinterpret_cast<const char*>(bytes.data()) + 8 + len);
  } catch (const json::exception& e) {
    throw CorruptFileError("bad scene header in " + path.string() + ": " + e.what());
  }
  const auto payload = std::span(bytes).subspan(8 + len);
  if (crc32(payload) != header.at("crc32").get<std::uint32_t>()) throw CorruptFileError("scene checksum mismatch: " + path.string());
  const Index h = header.at("height").get<Index>();
  const Index w = header.at("width").get<Index>();
  const auto values = decode_f32_le(payload);
  if (static_cast<Index>(values.size()) != 6 * h * w) throw CorruptFileError("scene payload size mismatch: " + path.string());
  auto plane = [&](int k) { return Raster<float>(Eigen::Map<const Raster<float>>(values.data() + k * h * w, h, w)); };
  Scene s;
  s.gt_depth = plane(0);
  for (int c = 0; c < 3; ++c) s.rgb[static_cast<std::size_t>(c)] = plane(1 + c);
  s.discontinuity = plane(4).cast<std::uint8_t>();
  s.primitive_id = plane(5).cast<std::int32_t>();
  s.seed = header.value("seed", std::uint64_t{0});
  return s;
}

}  // namespace ducos
