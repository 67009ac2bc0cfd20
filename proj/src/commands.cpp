#include "ducos/commands.hpp"

#include "ducos/objective.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace ducos {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

int exit_code_for(std::exception_ptr error, std::string& message) {
  try {
    std::rethrow_exception(error);
  } catch (const ConfigError& e) {
    message = std::string("config error: ") + e.what();
    return kExitConfig;
  } catch (const NumericError& e) {
    message = std::string("numeric abort: ") + e.what();
    return kExitNumeric;
  } catch (const DataError& e) {
    message = std::string("data error: ") + e.what();
    return kExitData;
  } catch (const CorruptFileError& e) {
    message = std::string("data error: ") + e.what();
    return kExitData;
  } catch (const IncompatibleFileError& e) {
    message = std::string("data error: ") + e.what();
    return kExitData;
  } catch (const ShapeError& e) {
    message = std::string("data error: ") + e.what();
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    message = std::string("data error: ") + e.what();
    return kExitData;
  } catch (const std::exception& e) {
    message = std::string("error: ") + e.what();
    return 1;
  }
}

std::pair<Index, Index> parse_size(const std::string& text) {
  const auto x = text.find('x');
  try {
    if (x == std::string::npos) throw std::invalid_argument(text);
    std::size_t used = 0;
    const Index h = std::stoll(text.substr(0, x), &used);
    if (used != x) throw std::invalid_argument(text);
    const std::string rest = text.substr(x + 1);
    const Index w = std::stoll(rest, &used);
    if (used != rest.size()) throw std::invalid_argument(text);
    if (h < kMinSceneExtent || w < kMinSceneExtent) {
      throw ConfigError("scene size must be at least " + std::to_string(kMinSceneExtent) + " per side");
    }
    return {h, w};
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError("size must look like HxW, got '" + text + "'");
  }
}

namespace {

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) throw ConfigError("empty entry in list '" + text + "'");
    out.push_back(item);
  }
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

}  // namespace

std::vector<double> parse_scales(const std::string& text) {
  std::vector<double> out;
  for (const auto& s : split_list(text)) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || !(v > 1)) throw ConfigError("scale must be a number > 1, got '" + s + "'");
    out.push_back(v);
  }
  return out;
}

std::vector<Regime> parse_regimes(const std::string& text) {
  std::vector<Regime> out;
  for (const auto& s : split_list(text)) {
    try {
      out.push_back(regime_from_string(s));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  return out;
}

std::uint64_t scene_seed(std::uint64_t base, Index i) {
  return degrade_seed(base, static_cast<std::uint64_t>(i), 0.0);
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

json data_to_json(const DataSpec& d) {
  json j;
  j["scenes_dir"] = d.scenes_dir ? json(d.scenes_dir->string()) : json(nullptr);
  j["n"] = d.n;
  j["size"] = std::to_string(d.height) + "x" + std::to_string(d.width);
  j["seed"] = d.seed;
  j["scale"] = d.scale;
  j["regime"] = to_string(d.regime);
  j["prompts_dir"] = d.prompts_dir ? json(d.prompts_dir->string()) : json(nullptr);
  return j;
}

DataSpec data_from_json(const json& j) {
  reject_unknown(j, {"scenes_dir", "n", "size", "seed", "scale", "regime", "prompts_dir"}, "data");
  DataSpec d;
  if (j.contains("scenes_dir") && !j["scenes_dir"].is_null()) d.scenes_dir = j["scenes_dir"].get<std::string>();
  if (j.contains("prompts_dir") && !j["prompts_dir"].is_null()) d.prompts_dir = j["prompts_dir"].get<std::string>();
  d.n = j.value("n", d.n);
  if (j.contains("size")) std::tie(d.height, d.width) = parse_size(j["size"].get<std::string>());
  d.seed = j.value("seed", d.seed);
  d.scale = j.value("scale", d.scale);
  d.regime = regime_from_string(j.value("regime", to_string(d.regime)));
  if (d.n < 1) throw ConfigError("data.n must be >= 1");
  if (!(d.scale > 1)) throw ConfigError("data.scale must be > 1");
  return d;
}

json train_to_json(const TrainConfig& c) {
  json j;
  j["lr"] = c.lr;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  j["optimizer"] = to_string(c.optimizer);
  j["adam_beta1"] = c.adam_beta1;
  j["adam_beta2"] = c.adam_beta2;
  j["adam_eps"] = c.adam_eps;
  j["lambda0"] = c.lambda0;
  j["mu0"] = c.mu0;
  j["eta_lambda0"] = c.eta_lambda0;
  j["eta_mu0"] = c.eta_mu0;
  j["schedule"] = to_string(c.schedule);
  j["disable_cf_loss"] = c.disable_cf_loss;
  j["disable_gr_loss"] = c.disable_gr_loss;
  j["fixed_multipliers"] = c.fixed_multipliers;
  j["shuffle"] = c.shuffle;
  return j;
}

TrainConfig train_from_json(const json& j) {
  reject_unknown(j,
                 {"lr", "epochs", "batch_size", "seed", "optimizer", "adam_beta1", "adam_beta2", "adam_eps", "lambda0",
                  "mu0", "eta_lambda0", "eta_mu0", "schedule", "disable_cf_loss", "disable_gr_loss",
                  "fixed_multipliers", "shuffle"},
                 "train");
  TrainConfig c;
  c.lr = j.value("lr", c.lr);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  c.optimizer = optimizer_from_string(j.value("optimizer", to_string(c.optimizer)));
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.lambda0 = j.value("lambda0", c.lambda0);
  c.mu0 = j.value("mu0", c.mu0);
  c.eta_lambda0 = j.value("eta_lambda0", c.eta_lambda0);
  c.eta_mu0 = j.value("eta_mu0", c.eta_mu0);
  c.schedule = schedule_from_string(j.value("schedule", to_string(c.schedule)));
  c.disable_cf_loss = j.value("disable_cf_loss", c.disable_cf_loss);
  c.disable_gr_loss = j.value("disable_gr_loss", c.disable_gr_loss);
  c.fixed_multipliers = j.value("fixed_multipliers", c.fixed_multipliers);
  c.shuffle = j.value("shuffle", c.shuffle);
  c.validate();
  return c;
}

std::string to_string(GradientOperator op) { return op == GradientOperator::central ? "central" : "sobel"; }

GradientOperator gradient_operator_from_string(const std::string& s) {
  if (s == "central") return GradientOperator::central;
  if (s == "sobel") return GradientOperator::sobel;
  throw std::invalid_argument("unknown gradient operator: " + s);
}

}  // namespace

TrainRun train_run_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    reject_unknown(j, {"out", "data", "model", "train", "dtype", "init_seed", "checkpoint_every", "gradient_operator"},
                   "config");
    TrainRun r;
    r.out = j.value("out", r.out.string());
    if (j.contains("data")) r.data = data_from_json(j["data"]);
    if (j.contains("model")) r.model = model_config_from_json(j["model"].dump());
    if (j.contains("train")) r.train = train_from_json(j["train"]);
    r.dtype = dtype_from_string(j.value("dtype", to_string(r.dtype)));
    r.init_seed = j.value("init_seed", r.init_seed);
    r.checkpoint_every = j.value("checkpoint_every", r.checkpoint_every);
    r.gradient_operator = gradient_operator_from_string(j.value("gradient_operator", to_string(r.gradient_operator)));
    if (r.checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
    return r;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

std::string train_run_to_json(const TrainRun& r) {
  json j;
  j["out"] = r.out.string();
  j["data"] = data_to_json(r.data);
  j["model"] = json::parse(model_config_to_json(r.model));
  j["train"] = train_to_json(r.train);
  j["dtype"] = to_string(r.dtype);
  j["init_seed"] = r.init_seed;
  j["checkpoint_every"] = r.checkpoint_every;
  j["gradient_operator"] = to_string(r.gradient_operator);
  return j.dump(2) + "\n";
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, std::as_bytes(std::span<const char>(text.data(), text.size())));
}

std::string read_text(const fs::path& path) {
  const auto bytes = read_file(path);
  return std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

std::string scene_name(Index i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%04lld", static_cast<long long>(i));
  return buf;
}

}  // namespace

void cmd_gen(const fs::path& out, Index n, Index height, Index width, std::uint64_t seed) {
  if (n < 1) throw ConfigError("--n must be >= 1");
  if (height < kMinSceneExtent || width < kMinSceneExtent) throw ConfigError("scene size too small");
  fs::create_directories(out);
  json entries = json::array();
  for (Index i = 0; i < n; ++i) {
    const std::string name = scene_name(i);
    const fs::path file = out / (name + ".dsn");
    write_scene(file, gen_scene(scene_seed(seed, i), height, width));
    const auto bytes = read_file(file);
    entries.push_back({{"name", name}, {"file", file.filename().string()}, {"crc32", crc32(bytes)}});
  }
  json manifest;
  manifest["format"] = "ducos-scenes";
  manifest["count"] = n;
  manifest["size"] = std::to_string(height) + "x" + std::to_string(width);
  manifest["seed"] = seed;
  manifest["entries"] = entries;
  write_text(out / "manifest.json", manifest.dump(2) + "\n");
}

std::vector<NamedScene> load_scene_dir(const fs::path& dir) {
  json manifest;
  try {
    manifest = json::parse(read_text(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw DataError("bad scene manifest in " + dir.string() + ": " + e.what());
  } catch (const std::runtime_error& e) {
    throw DataError(e.what());
  }
  std::vector<NamedScene> out;
  for (const auto& e : manifest.at("entries")) {
    const fs::path file = dir / e.at("file").get<std::string>();
    const auto bytes = read_file(file);
    if (crc32(bytes) != e.at("crc32").get<std::uint32_t>()) {
      throw CorruptFileError("checksum mismatch for " + file.string());
    }
    out.push_back({e.at("name").get<std::string>(), read_scene(file)});
  }
  if (out.empty()) throw DataError("scene manifest lists no entries");
  return out;
}

std::vector<NamedScene> resolve_scenes(const DataSpec& data) {
  if (data.scenes_dir) return load_scene_dir(*data.scenes_dir);
  std::vector<NamedScene> out;
  for (Index i = 0; i < data.n; ++i) {
    out.push_back({scene_name(i), gen_scene(scene_seed(data.seed, i), data.height, data.width)});
  }
  return out;
}

std::vector<SamplePair> build_samples(const DataSpec& data) {
  std::vector<SamplePair> out;
  for (auto& ns : resolve_scenes(data)) {
    std::optional<PromptFlow> prompts;
    if (data.prompts_dir) {
      prompts = load_prompt_file(*data.prompts_dir / (ns.name + ".dpf"), ns.scene.height(), ns.scene.width());
    }
    out.push_back(degrade(ns.scene, data.scale, data.regime, degrade_seed(data.seed, ns.scene.seed, data.scale),
                          std::move(prompts)));
  }
  return out;
}

namespace {

template <typename T>
TrainOutcome train_typed(const TrainRun& run, std::vector<SamplePair> samples) {
  DuCosModel<T> model(run.model);
  model.init_params(run.init_seed);
  DuCosObjective<T> objective(model, std::move(samples), run.gradient_operator);
  Trainer<T> trainer(objective, run.train);
  std::vector<HistoryRow> rows;
  auto flush_history = [&] {
    std::ostringstream os;
    write_history_csv(os, rows);
    write_text(run.out / "history.csv", os.str());
  };
  TrainOutcome outcome;
  try {
    outcome.history = trainer.train([&](const HistoryRow& row) {
      rows.push_back(row);
      if (run.checkpoint_every > 0 && row.epoch % run.checkpoint_every == 0) {
        char buf[48];
        std::snprintf(buf, sizeof buf, "ckpt_epoch_%04d.ckpt", row.epoch);
        save_checkpoint(run.out / buf, model);
      }
    });
  } catch (const NumericError&) {
    flush_history();
    throw;
  }
  flush_history();
  outcome.dual = trainer.dual();
  outcome.final_checkpoint = run.out / "final.ckpt";
  save_checkpoint(outcome.final_checkpoint, model);
  return outcome;
}

}  // namespace

TrainOutcome cmd_train(const TrainRun& run) {
  std::vector<SamplePair> samples = build_samples(run.data);
  fs::create_directories(run.out);
  write_text(run.out / "effective_config.json", train_run_to_json(run));
  return run.dtype == Dtype::f64 ? train_typed<double>(run, std::move(samples))
                                 : train_typed<float>(run, std::move(samples));
}

TrainOutcome cmd_train(const fs::path& config_path) {
  std::string text;
  try {
    text = read_text(config_path);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("cannot read config: ") + e.what());
  }
  return cmd_train(train_run_from_json(text));
}

std::vector<EvalRow> cmd_eval(const EvalCommand& c) {
  if (c.scales.empty() || c.regimes.empty()) throw ConfigError("empty scale or regime grid");
  const CheckpointInfo info = read_checkpoint_info(c.checkpoint);
  std::vector<Scene> scenes;
  for (auto& ns : resolve_scenes(c.data)) scenes.push_back(std::move(ns.scene));
  EvalOptions options;
  options.seed = c.data.seed;
  options.threads = c.threads;
  options.error_map_dir = c.error_maps;
  std::vector<EvalRow> rows;
  if (info.dtype == Dtype::f64) {
    const DuCosModel<double> model = load_checkpoint<double>(c.checkpoint);
    rows = eval_run([&](const SamplePair& p) { return model.predict(p.x, p.prompts); }, scenes, c.scales, c.regimes,
                    options);
  } else {
    const DuCosModel<float> model = load_checkpoint<float>(c.checkpoint);
    rows = eval_run([&](const SamplePair& p) { return model.predict(p.x, p.prompts); }, scenes, c.scales, c.regimes,
                    options);
  }
  if (c.out_csv.has_parent_path()) fs::create_directories(c.out_csv.parent_path());
  std::ostringstream os;
  write_metrics_csv(os, rows);
  write_text(c.out_csv, os.str());
  return rows;
}

std::vector<fs::path> cmd_export_prompts(const fs::path& raw, const fs::path& out) {
  return export_prompts(raw, out);
}

}  // namespace ducos
