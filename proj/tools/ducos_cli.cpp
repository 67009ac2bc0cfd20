#include "ducos/commands.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

namespace {

int threads_from_env() {
  const char* v = std::getenv("DUCOS_THREADS");
  if (!v || !*v) return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end || n < 1) throw ducos::ConfigError(std::string("DUCOS_THREADS must be a positive integer, got '") + v + "'");
  return static_cast<int>(n);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Depth super-resolution with foundation-model prompts"};
  app.require_subcommand(1);

  std::string out, size = "64x64";
  long long n = 4;
  std::uint64_t seed = 0;
  auto* gen = app.add_subcommand("gen", "Generate synthetic scenes");
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_option("--n", n, "Number of scenes");
  gen->add_option("--size", size, "Scene extent HxW");
  gen->add_option("--seed", seed, "Base seed");

  std::string config;
  auto* train = app.add_subcommand("train", "Train with Lagrangian dual ascent");
  train->add_option("--config", config, "JSON run configuration")->required();

  std::string ckpt, scales = "2,4,8,16", regimes = "clean", metrics = "metrics.csv", scenes_dir, error_maps;
  std::string eval_size = "64x64";
  long long eval_n = 20;
  std::uint64_t eval_seed = 0;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint over a scale/regime grid");
  eval->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  eval->add_option("--scales", scales, "Comma-separated scales > 1");
  eval->add_option("--regimes", regimes, "Comma-separated regimes (clean,noisy)");
  eval->add_option("--data", scenes_dir, "Scene directory written by gen");
  eval->add_option("--n", eval_n, "Generated scene count when --data is absent");
  eval->add_option("--size", eval_size, "Generated scene extent HxW");
  eval->add_option("--seed", eval_seed, "Data and noise seed");
  eval->add_option("--out", metrics, "Metrics CSV path");
  eval->add_option("--error-maps", error_maps, "Directory for per-sample error maps");

  std::string raw, prompt_out;
  auto* exp = app.add_subcommand("export-prompts", "Convert raw prompt arrays to prompt files");
  exp->add_option("--raw", raw, "Directory with manifest.json and raw float32 arrays")->required();
  exp->add_option("--out", prompt_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : ducos::kExitConfig;
  }

  try {
    if (gen->parsed()) {
      const auto [h, w] = ducos::parse_size(size);
      ducos::cmd_gen(out, n, h, w, seed);
      std::cout << "wrote " << n << " scenes to " << out << "\n";
    } else if (train->parsed()) {
      const auto outcome = ducos::cmd_train(config);
      const auto& last = outcome.history.back();
      std::cout << "epochs " << outcome.history.size() << " l_rec " << last.l_rec << " lambda " << last.lambda << " mu "
                << last.mu << "\ncheckpoint " << outcome.final_checkpoint.string() << "\n";
    } else if (eval->parsed()) {
      ducos::EvalCommand c;
      c.checkpoint = ckpt;
      c.scales = ducos::parse_scales(scales);
      c.regimes = ducos::parse_regimes(regimes);
      if (!scenes_dir.empty()) c.data.scenes_dir = scenes_dir;
      c.data.n = eval_n;
      std::tie(c.data.height, c.data.width) = ducos::parse_size(eval_size);
      c.data.seed = eval_seed;
      c.out_csv = metrics;
      if (!error_maps.empty()) c.error_maps = error_maps;
      c.threads = threads_from_env();
      const auto rows = ducos::cmd_eval(c);
      ducos::write_metrics_csv(std::cout, rows);
    } else if (exp->parsed()) {
      const auto written = ducos::cmd_export_prompts(raw, prompt_out);
      std::cout << "wrote " << written.size() << " prompt files to " << prompt_out << "\n";
    }
  } catch (...) {
    std::string message;
    const int code = ducos::exit_code_for(std::current_exception(), message);
    std::cerr << message << "\n";
    return code;
  }
  return ducos::kExitOk;
}
