#include "ducos/io.hpp"
#include "ducos/scene.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace ducos;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("ducos_test_io_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("crc32 check value") {
  const std::string text = "123456789";
  CHECK(crc32(std::as_bytes(std::span(text.data(), text.size()))) == 0xCBF43926u);
}

TEST_CASE("little-endian codecs") {
  std::vector<std::byte> out;
  append_u32_le(out, 0x01020304u);
  CHECK(out[0] == std::byte{4});
  CHECK(decode_u32_le(out) == 0x01020304u);
  const std::vector<float> f{1.5f, -0.0f, 3.25e-7f};
  const std::vector<double> d{1.0 / 3, -2e300};
  std::vector<std::byte> fb, db;
  append_f32_le(fb, f);
  append_f64_le(db, d);
  CHECK(decode_f32_le(fb) == f);
  CHECK(decode_f64_le(db) == d);
  CHECK_THROWS(decode_f32_le(std::span(fb).first(5)));
}

TEST_CASE("pgm16 round trip") {
  const auto dir = temp_dir("pgm16");
  Raster<float> depth(5, 7);
  for (Index i = 0; i < depth.size(); ++i) depth.data()[i] = 0.25f * static_cast<float>(i);
  depth(0, 0) = 100.0f;  // clamps
  const Pgm16 img = Pgm16::from_meters(depth, 0.001);
  CHECK(img.samples(0, 0) == 65535);
  CHECK(img.samples(0, 1) == 250);
  write_pgm16(dir / "d.pgm", img);
  const Pgm16 back = read_pgm16(dir / "d.pgm");
  CHECK((back.samples == img.samples).all());
  CHECK(back.scale_to_meters == doctest::Approx(0.001));
  CHECK(back.meters()(0, 3) == doctest::Approx(0.75f));

  // Big-endian samples after the header.
  const auto bytes = read_file(dir / "d.pgm");
  CHECK(bytes[bytes.size() - 2] == std::byte{static_cast<unsigned char>(img.samples(4, 6) >> 8)});
  std::ofstream(dir / "bad.pgm") << "P2\n1 1\n255\n0\n";
  CHECK_THROWS_AS(read_pgm16(dir / "bad.pgm"), CorruptFileError);
  fs::remove_all(dir);
}

TEST_CASE("pgm8 round trip") {
  const auto dir = temp_dir("pgm8");
  Raster<std::uint8_t> img(3, 4);
  for (Index i = 0; i < img.size(); ++i) img.data()[i] = static_cast<std::uint8_t>(i * 20);
  write_pgm8(dir / "e.pgm", img);
  CHECK((read_pgm8(dir / "e.pgm") == img).all());
  fs::remove_all(dir);
}

TEST_CASE("raw float32 with sidecar round trip") {
  const auto dir = temp_dir("raw");
  std::mt19937_64 rng(1);
  const auto t = oracle::random_tensor({2, 3, 5}, rng, -1, 1, false).cast<float>();
  write_raw_f32(dir / "t.f32", t.shape(), std::span(t.values().data(), static_cast<std::size_t>(t.numel())));
  CHECK(fs::exists(dir / "t.f32.json"));
  const Tensor<float> back = read_raw_f32(dir / "t.f32");
  CHECK(back.shape() == t.shape());
  CHECK((back.values() == t.values()).all());
  std::ofstream(dir / "t.f32.json") << R"({"shape": [2, 3, 6], "dtype": "float32"})";
  CHECK_THROWS(read_raw_f32(dir / "t.f32"));
  fs::remove_all(dir);
}

TEST_CASE("scene round trip is bit exact") {
  const auto dir = temp_dir("scene");
  const Scene scene = gen_scene(77, 33, 47);
  write_scene(dir / "s.dsn", scene);
  const Scene back = read_scene(dir / "s.dsn");
  CHECK(back.seed == scene.seed);
  CHECK((back.gt_depth == scene.gt_depth).all());
  for (int c = 0; c < 3; ++c) CHECK((back.rgb[static_cast<std::size_t>(c)] == scene.rgb[static_cast<std::size_t>(c)]).all());
  CHECK((back.discontinuity == scene.discontinuity).all());
  auto bytes = read_file(dir / "s.dsn");
  bytes.resize(bytes.size() / 2);
  write_file(dir / "cut.dsn", bytes);
  CHECK_THROWS_AS(read_scene(dir / "cut.dsn"), CorruptFileError);
  CHECK_THROWS(read_file(dir / "missing.dsn"));
  fs::remove_all(dir);
}

TEST_CASE("scene generation examples") {
  const Scene plane = gen_scene(SceneSpec{}, 40, 40);
  CHECK((plane.discontinuity == 0).all());
  CHECK(((plane.gt_depth - 5.0f).abs() < 1e-6f).all());

  SceneSpec one;
  Primitive r;
  r.depth = 1.0;
  r.top = 10, r.left = 12, r.bottom = 20, r.right = 30;
  one.primitives = {r};
  const Scene s = gen_scene(one, 40, 40);
  for (Index i = 0; i < 40; ++i)
    for (Index j = 0; j < 40; ++j) {
      const bool inside = i >= 10 && i < 20 && j >= 12 && j < 30;
      const bool border = inside && (i == 10 || i == 19 || j == 12 || j == 29);
      CHECK(s.gt_depth(i, j) == doctest::Approx(inside ? 1.0 : 5.0));
      CHECK(static_cast<bool>(s.discontinuity(i, j)) == border);
    }

  const Scene a = gen_scene(9, 32, 48), b = gen_scene(9, 32, 48);
  CHECK((a.gt_depth == b.gt_depth).all());
  CHECK((a.rgb[1] == b.rgb[1]).all());
  CHECK((a.gt_depth >= 0).all());
  CHECK(a.gt_depth.maxCoeff() <= 10.0f);
  CHECK_THROWS(gen_scene(1, 27, 40));
}
