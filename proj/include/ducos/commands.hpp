#ifndef DUCOS_COMMANDS_HPP
#define DUCOS_COMMANDS_HPP

#include "ducos/harness.hpp"
#include "ducos/network.hpp"
#include "ducos/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ducos {

/// Invalid command line or configuration document.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Missing, corrupt or incompatible input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

/// Maps the in-flight exception to a process exit code and message.
int exit_code_for(std::exception_ptr error, std::string& message);

/// "HxW" -> {H, W}
std::pair<Index, Index> parse_size(const std::string& text);
std::vector<double> parse_scales(const std::string& text);
std::vector<Regime> parse_regimes(const std::string& text);

/// Seed of the i-th scene of a generated set.
std::uint64_t scene_seed(std::uint64_t base, Index i);

/// Where training/evaluation scenes come from: a directory written by
/// `gen`, or generated in memory from (n, size, seed).
struct DataSpec {
  std::optional<std::filesystem::path> scenes_dir;
  Index n = 4;
  Index height = 64;
  Index width = 64;
  std::uint64_t seed = 0;
  double scale = 4;
  Regime regime = Regime::clean;
  /// Directory of <scene name>.dpf prompt files; the oracle when unset.
  std::optional<std::filesystem::path> prompts_dir;
};

struct TrainRun {
  std::filesystem::path out = "run";
  DataSpec data;
  ModelConfig model;
  TrainConfig train;
  Dtype dtype = Dtype::f32;
  std::uint64_t init_seed = 0;
  /// Write a checkpoint every k epochs; 0 keeps only the final one.
  int checkpoint_every = 0;
  GradientOperator gradient_operator = GradientOperator::central;
};

/// Unknown keys at any level raise ConfigError.
TrainRun train_run_from_json(const std::string& text);
/// Every field, defaults included.
std::string train_run_to_json(const TrainRun& run);

struct NamedScene {
  std::string name;
  Scene scene;
};

/// `gen`: N scene files plus manifest.json with per-file CRC32.
void cmd_gen(const std::filesystem::path& out, Index n, Index height, Index width, std::uint64_t seed);
/// Reads a `gen` directory, verifying every checksum first.
std::vector<NamedScene> load_scene_dir(const std::filesystem::path& dir);
std::vector<NamedScene> resolve_scenes(const DataSpec& data);

/// Training pairs for a data spec.
std::vector<SamplePair> build_samples(const DataSpec& data);

struct TrainOutcome {
  std::vector<HistoryRow> history;
  DualState dual;
  std::filesystem::path final_checkpoint;
};

/// Writes effective_config.json, history.csv and checkpoints under run.out.
TrainOutcome cmd_train(const TrainRun& run);
TrainOutcome cmd_train(const std::filesystem::path& config_path);

struct EvalCommand {
  std::filesystem::path checkpoint;
  std::vector<double> scales{2, 4, 8, 16};
  std::vector<Regime> regimes{Regime::clean};
  DataSpec data;
  std::filesystem::path out_csv = "metrics.csv";
  std::optional<std::filesystem::path> error_maps;
  int threads = 1;
};

std::vector<EvalRow> cmd_eval(const EvalCommand& command);

std::vector<std::filesystem::path> cmd_export_prompts(const std::filesystem::path& raw,
                                                      const std::filesystem::path& out);

}  // namespace ducos

#endif  // DUCOS_COMMANDS_HPP
