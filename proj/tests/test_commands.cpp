#include "ducos/commands.hpp"
#include "ducos/io.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

using namespace ducos;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("ducos_test_commands_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

TrainRun tiny_run(const fs::path& out) {
  TrainRun run;
  run.out = out;
  run.data.n = 2;
  run.data.height = run.data.width = 28;
  run.model.channels = 4;
  run.model.resblocks = 1;
  run.model.iterations = 1;
  run.train.epochs = 2;
  run.train.lr = 1e-3;
  run.train.optimizer = OptimizerKind::adam;
  return run;
}

}  // namespace

TEST_CASE("argument parsers") {
  CHECK(parse_size("64x48") == std::pair<Index, Index>{64, 48});
  CHECK_THROWS_AS(parse_size("64"), ConfigError);
  CHECK_THROWS_AS(parse_size("20x64"), ConfigError);
  CHECK(parse_scales("2,4,8,16") == std::vector<double>{2, 4, 8, 16});
  CHECK(parse_scales("1.5,2.7,3.4,5.3,11.6").size() == 5);
  CHECK_THROWS_AS(parse_scales("1,2"), ConfigError);
  CHECK_THROWS_AS(parse_scales("2,x"), ConfigError);
  CHECK(parse_regimes("clean,noisy") == std::vector<Regime>{Regime::clean, Regime::noisy});
  CHECK_THROWS_AS(parse_regimes("foggy"), ConfigError);
}

TEST_CASE("train config json round trip and strictness") {
  TrainRun run = tiny_run("somewhere");
  run.data.regime = Regime::noisy;
  run.data.prompts_dir = "prompts";
  run.dtype = Dtype::f64;
  run.checkpoint_every = 3;
  run.gradient_operator = GradientOperator::sobel;
  run.train.schedule = ScheduleMode::compounding;
  const std::string text = train_run_to_json(run);
  const TrainRun back = train_run_from_json(text);
  CHECK(train_run_to_json(back) == text);
  CHECK(back.model == run.model);
  CHECK(back.data.prompts_dir == run.data.prompts_dir);

  CHECK_THROWS_AS(train_run_from_json("{"), ConfigError);
  CHECK_THROWS_AS(train_run_from_json(R"({"bogus": 1})"), ConfigError);
  CHECK_THROWS_AS(train_run_from_json(R"({"train": {"epochs": 2, "lr_typo": 1}})"), ConfigError);
  CHECK_THROWS_AS(train_run_from_json(R"({"model": {"channels": 4, "depth": 2}})"), ConfigError);
  CHECK_THROWS_AS(train_run_from_json(R"({"train": {"epochs": 0}})"), ConfigError);
  CHECK_THROWS_AS(train_run_from_json(R"({"train": {"epochs": "two"}})"), ConfigError);
  CHECK_NOTHROW(train_run_from_json("{}"));
}

TEST_CASE("gen writes a verifiable, deterministic directory") {
  const auto a = temp_dir("gen_a"), b = temp_dir("gen_b");
  cmd_gen(a, 4, 32, 40, 7);
  cmd_gen(b, 4, 32, 40, 7);
  const auto manifest = nlohmann::json::parse(slurp(a / "manifest.json"));
  REQUIRE(manifest.at("entries").size() == 4);
  for (const auto& e : manifest.at("entries")) {
    const auto file = e.at("file").get<std::string>();
    const auto bytes = read_file(a / file);
    CHECK(crc32(bytes) == e.at("crc32").get<std::uint32_t>());
    CHECK(slurp(a / file) == slurp(b / file));
  }
  CHECK(slurp(a / "manifest.json") == slurp(b / "manifest.json"));
  CHECK(load_scene_dir(a).size() == 4);

  // A flipped byte fails the manifest check.
  auto bytes = read_file(a / "scene_0001.dsn");
  bytes[bytes.size() - 1] ^= std::byte{1};
  write_file(a / "scene_0001.dsn", bytes);
  CHECK_THROWS(load_scene_dir(a));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("train writes history, checkpoints and an effective config that reproduces the run") {
  const auto dir = temp_dir("train");
  TrainRun run = tiny_run(dir / "r1");
  run.checkpoint_every = 1;
  const TrainOutcome first = cmd_train(run);
  CHECK(first.history.size() == 2);
  CHECK(fs::exists(dir / "r1" / "history.csv"));
  CHECK(fs::exists(dir / "r1" / "ckpt_epoch_0001.ckpt"));
  CHECK(fs::exists(dir / "r1" / "ckpt_epoch_0002.ckpt"));
  CHECK(fs::exists(first.final_checkpoint));
  CHECK(slurp(dir / "r1" / "history.csv").rfind(kHistoryHeader, 0) == 0);

  // Re-running from the echoed config is bit identical.
  TrainRun again = train_run_from_json(slurp(dir / "r1" / "effective_config.json"));
  again.out = dir / "r2";
  cmd_train(again);
  CHECK(slurp(dir / "r1" / "final.ckpt") == slurp(dir / "r2" / "final.ckpt"));
  CHECK(slurp(dir / "r1" / "history.csv") == slurp(dir / "r2" / "history.csv"));

  EvalCommand ev;
  ev.checkpoint = first.final_checkpoint;
  ev.scales = {2, 4};
  ev.regimes = {Regime::clean, Regime::noisy};
  ev.data.n = 2;
  ev.data.height = ev.data.width = 28;
  ev.out_csv = dir / "metrics.csv";
  const auto rows = cmd_eval(ev);
  CHECK(rows.size() == 4);
  const std::string csv = slurp(dir / "metrics.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);

  ev.checkpoint = dir / "missing.ckpt";
  CHECK_THROWS(cmd_eval(ev));
  fs::remove_all(dir);
}

TEST_CASE("exit codes by error class") {
  auto code = [](auto&& thrower) {
    std::string msg;
    try {
      thrower();
    } catch (...) {
      return exit_code_for(std::current_exception(), msg);
    }
    return -1;
  };
  CHECK(code([] { throw ConfigError("x"); }) == kExitConfig);
  CHECK(code([] { throw DataError("x"); }) == kExitData);
  CHECK(code([] { throw CorruptFileError("x"); }) == kExitData);
  CHECK(code([] { throw NumericError("x"); }) == kExitNumeric);
  CHECK(code([] { read_file("/nonexistent/ducos/file"); }) == kExitData);
}
