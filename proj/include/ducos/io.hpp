#ifndef DUCOS_IO_HPP
#define DUCOS_IO_HPP

#include "ducos/scene.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ducos {

/// File contents are malformed or fail their checksum.
class CorruptFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File is well formed but does not fit the requested use.
class IncompatibleFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::uint32_t crc32(std::span<const std::byte> bytes);

std::vector<std::byte> read_file(const std::filesystem::path& path);
/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
void write_file(const std::filesystem::path& path, std::span<const std::byte> bytes);

void append_f32_le(std::vector<std::byte>& out, std::span<const float> values);
void append_f64_le(std::vector<std::byte>& out, std::span<const double> values);
std::vector<float> decode_f32_le(std::span<const std::byte> bytes);
std::vector<double> decode_f64_le(std::span<const std::byte> bytes);
void append_u32_le(std::vector<std::byte>& out, std::uint32_t v);
std::uint32_t decode_u32_le(std::span<const std::byte> bytes);

/// 16-bit binary PGM (P5, big-endian samples) with a
/// `# scale_to_meters=<float>` comment.
struct Pgm16 {
  Raster<std::uint16_t> samples;
  double scale_to_meters = 0.001;

  Raster<float> meters() const;
  /// Quantizes metres to samples, rounding and clamping to [0, 65535].
  static Pgm16 from_meters(const Raster<float>& depth, double scale_to_meters);
};

void write_pgm16(const std::filesystem::path& path, const Pgm16& image);
Pgm16 read_pgm16(const std::filesystem::path& path);

/// 8-bit binary PGM.
void write_pgm8(const std::filesystem::path& path, const Raster<std::uint8_t>& image);
Raster<std::uint8_t> read_pgm8(const std::filesystem::path& path);

/// Raw little-endian float32 payload plus a `<path>.json` sidecar holding
/// {"shape": [...], "dtype": "float32"}.
void write_raw_f32(const std::filesystem::path& path, const Shape& shape, std::span<const float> values);
Tensor<float> read_raw_f32(const std::filesystem::path& path);

/// Scene container: "DSN1", u32 header length, JSON header, float32 payload
/// of depth, R, G, B and the discontinuity mask.
void write_scene(const std::filesystem::path& path, const Scene& scene);
Scene read_scene(const std::filesystem::path& path);

}  // namespace ducos

#endif  // DUCOS_IO_HPP
