// gst: dataset preparation, training, evaluation, prediction, crowd
// simulation and dataset statistics.
//
// Exit status: 0 ok, 2 usage, 3 missing/unreadable/malformed file,
// 4 config or checkpoint mismatch, 5 numerical abort.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gst/crowd_sim.hpp"
#include "gst/dataset.hpp"
#include "gst/errors.hpp"
#include "gst/evaluation.hpp"
#include "gst/model_config.hpp"
#include "gst/params.hpp"
#include "gst/training.hpp"

namespace fs = std::filesystem;
using namespace gst;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitMismatch = 4;
constexpr int kExitNumerical = 5;

constexpr std::uint64_t kSyntheticSeed = 7;

struct DataArgs {
  std::string data_root;
  std::string manifest;
  std::vector<std::string> scenes;
  std::string windows_file;
  std::size_t stride = 1;
  std::size_t every = 1;
  double split = 0.8;
};

struct ModelArgs {
  bool partial = true;
  bool sparsity = true;
  std::size_t neighbors = 1;
};

struct Run {
  CLI::App* cmd = nullptr;
  std::string out_dir = "out";
  std::string checkpoint;
  std::uint64_t seed = 0;
  std::string mode = "soft";
  double tau = 0.03;
  std::size_t rollouts = 20;
  std::size_t window = 0;
  std::vector<std::string> scenarios{"all"};
  std::string geometry;
  bool untrained = false;
  DataArgs data;
  ModelArgs model;
  TrainConfig train;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

// "key = value" lines become "--key=value" arguments; underscores in keys
// read as dashes.
std::vector<std::string> config_arguments(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::vector<std::string> args;
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError(path.string() + ":" + std::to_string(n) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    for (char& c : key) c = c == '_' ? '-' : c;
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    args.push_back("--" + key + "=" + value);
  }
  return args;
}

// Config file entries go right after the subcommand so explicit flags win.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::vector<std::string> from_file;
  for (std::size_t k = 0; k < args.size(); ++k) {
    std::string path;
    if (args[k] == "--config" && k + 1 < args.size()) {
      path = args[k + 1];
      args.erase(args.begin() + static_cast<long>(k), args.begin() + static_cast<long>(k) + 2);
    } else if (args[k].rfind("--config=", 0) == 0) {
      path = args[k].substr(9);
      args.erase(args.begin() + static_cast<long>(k));
    } else {
      continue;
    }
    const auto extra = config_arguments(path);
    from_file.insert(from_file.end(), extra.begin(), extra.end());
    --k;
  }
  if (!from_file.empty()) {
    if (args.empty()) throw std::invalid_argument("--config needs a subcommand");
    args.insert(args.begin() + 1, from_file.begin(), from_file.end());
  }
  return args;
}

std::string data_root_default() {
  const char* env = std::getenv("GST_DATA_ROOT");
  return env ? env : "";
}

fs::path manifest_path(const DataArgs& d) {
  if (!d.manifest.empty()) return d.manifest;
  if (d.data_root.empty()) {
    throw IoError("no data root: set GST_DATA_ROOT or pass --data-root or --manifest");
  }
  return fs::path(d.data_root) / "manifest.txt";
}

std::vector<std::string> resolve_scenes(const DataArgs& d) {
  if (d.scenes.size() == 1 && d.scenes[0] == "all") {
    std::vector<std::string> names;
    for (const auto& [name, path] : load_manifest(manifest_path(d))) names.push_back(name);
    return names;
  }
  return d.scenes;
}

std::vector<TrajectoryWindow> scene_windows(const DataArgs& d, const std::string& scene,
                                            std::size_t stride) {
  if (scene == "synthetic") {
    auto windows = constant_velocity_windows({}, kSyntheticSeed);
    std::vector<TrajectoryWindow> strided;
    for (std::size_t k = 0; k < windows.size(); k += stride) strided.push_back(windows[k]);
    return strided;
  }
  const auto manifest = load_manifest(manifest_path(d));
  const auto it = manifest.find(scene);
  if (it == manifest.end()) {
    throw std::invalid_argument("scene '" + scene + "' is not in " + manifest_path(d).string());
  }
  return make_windows(load_scene(it->second), stride, scene);
}

// Windows of one phase: a cache file if given, otherwise the chronological
// split of the scene.
std::vector<TrajectoryWindow> phase_windows(const DataArgs& d, const std::string& scene,
                                            bool train_part) {
  std::vector<TrajectoryWindow> all =
      d.windows_file.empty() ? scene_windows(d, scene, d.stride) : load_windows(d.windows_file);
  if (d.windows_file.empty()) {
    DatasetSplit split = chronological_split(std::move(all), d.split);
    all = train_part ? std::move(split.train) : std::move(split.test);
  }
  std::vector<TrajectoryWindow> picked;
  for (std::size_t k = 0; k < all.size(); k += d.every) picked.push_back(std::move(all[k]));
  return picked;
}

void add_data_options(CLI::App* cmd, DataArgs& d, bool scenes, std::size_t stride) {
  cmd->add_option("--data-root", d.data_root, "data directory holding manifest.txt")
      ->default_str("$GST_DATA_ROOT");
  cmd->add_option("--manifest", d.manifest, "scene manifest, overrides the data root");
  if (scenes) {
    cmd->add_option("--scene", d.scenes, "manifest scene name, 'synthetic' or 'all'")
        ->delimiter(',');
  }
  cmd->add_option("--stride", d.stride, "window stride in steps")
      ->default_str(std::to_string(stride))
      ->check(CLI::PositiveNumber);
}

// Values resolved at run time, e.g. the default checkpoint path.
std::map<std::string, std::string> g_resolved;

// Flags whose value belongs in resolved.cfg even when left at the default.
std::map<const CLI::Option*, const bool*> g_recorded_flags;

CLI::Option* bool_flag(CLI::App* cmd, const std::string& name, bool& value,
                       const std::string& help) {
  CLI::Option* opt = cmd->add_flag(name, value, help + " (" + name + "=false to disable)");
  g_recorded_flags[opt] = &value;
  return opt;
}

// With `recorded` off the flags only check a checkpoint and are not
// materialised when absent.
void add_model_flags(CLI::App* cmd, ModelArgs& m, bool recorded) {
  if (recorded) {
    bool_flag(cmd, "--partial", m.partial, "feed partially observed pedestrians");
    bool_flag(cmd, "--sparsity", m.sparsity, "sample a sparse graph");
    cmd->add_option("--neighbors", m.neighbors, "neighbour cap n")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
  } else {
    cmd->add_flag("--partial", m.partial, "require a checkpoint trained with partial input");
    cmd->add_flag("--sparsity", m.sparsity, "require a sparse-graph checkpoint");
    cmd->add_option("--neighbors", m.neighbors, "require this neighbour cap")
        ->check(CLI::PositiveNumber);
  }
}

void add_sampling_options(CLI::App* cmd, Run& r) {
  cmd->add_option("--mode", r.mode, "graph sampling at inference")
      ->capture_default_str()
      ->check(CLI::IsMember({"soft", "hard", "deterministic"}));
  cmd->add_option("--tau", r.tau, "Gumbel-softmax temperature")->capture_default_str();
  cmd->add_option("--seed", r.seed, "random seed")->capture_default_str();
}

bool given(const CLI::App* cmd, const std::string& name) {
  return cmd->get_option(name)->count() > 0;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  open_out(path) << j.dump(2) << '\n';
}

// Every option of the command with its final value, in the --config format.
void write_resolved(const fs::path& dir, const CLI::App* cmd) {
  std::ofstream out = open_out(dir / "resolved.cfg");
  out << "# gst " << cmd->get_name() << "\n";
  for (const CLI::Option* opt : cmd->get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name == "out-dir" || opt->get_lnames().empty()) continue;
    std::string value;
    if (const auto f = g_recorded_flags.find(opt); f != g_recorded_flags.end()) {
      value = *f->second ? "true" : "false";
    } else if (opt->count() > 0) {
      const auto res = opt->reduced_results();
      for (std::size_t k = 0; k < res.size(); ++k) value += (k ? "," : "") + res[k];
      if (opt->get_type_size() == 0) value = opt->as<bool>() ? "true" : "false";
    } else {
      value = opt->get_default_str();
    }
    if (value.empty() && g_resolved.contains(name)) value = g_resolved.at(name);
    if (value.empty() || value.front() == '$') continue;
    out << name << " = " << value << "\n";
  }
}

Checkpoint load_model(const Run& r, const fs::path& fallback, ModelConfig& config, int& variant,
                      bool& partial) {
  const fs::path path = r.checkpoint.empty() ? fallback : fs::path(r.checkpoint);
  if (path.empty()) throw IoError("no --checkpoint given");
  if (!fs::exists(path)) throw IoError("checkpoint not found: " + path.string());
  g_resolved["checkpoint"] = path.string();
  Checkpoint ck = load_checkpoint(path);
  const auto& meta = ck.metadata;
  if (!meta.contains("model") || !meta.contains("variant") || !meta.contains("partial")) {
    throw FormatError(path.string() + ": metadata lacks model, variant or partial");
  }
  config = meta.at("model").get<ModelConfig>();
  variant = meta.at("variant").get<int>();
  partial = meta.at("partial").get<bool>();
  check_params(config, ck.params);
  const CLI::App* cmd = r.cmd;
  auto clash = [&](const std::string& what, const std::string& asked, const std::string& has) {
    throw ConfigMismatch("--" + what + " " + asked + " but " + path.string() + " was trained with " +
                         has);
  };
  if (given(cmd, "--partial") && r.model.partial != partial) {
    clash("partial", r.model.partial ? "true" : "false", partial ? "true" : "false");
  }
  if (given(cmd, "--sparsity") && r.model.sparsity != config.sparsity) {
    clash("sparsity", r.model.sparsity ? "true" : "false", config.sparsity ? "true" : "false");
  }
  if (given(cmd, "--neighbors") && config.sparsity && r.model.neighbors != config.neighbors) {
    clash("neighbors", std::to_string(r.model.neighbors), std::to_string(config.neighbors));
  }
  return ck;
}

fs::path default_checkpoint(const Run& r, const std::string& scene) {
  return fs::path(r.out_dir) / scene / "checkpoints" / "final.json";
}

int cmd_prepare(const Run& r) {
  const auto scenes = resolve_scenes(r.data);
  std::vector<std::vector<TrajectoryWindow>> all;
  for (const auto& scene : scenes) all.push_back(scene_windows(r.data, scene, r.data.stride));
  ensure_dir(r.out_dir);
  for (std::size_t k = 0; k < scenes.size(); ++k) {
    const DatasetSplit split = chronological_split(all[k], r.data.split);
    save_windows(fs::path(r.out_dir) / (scenes[k] + ".train.json"), split.train);
    save_windows(fs::path(r.out_dir) / (scenes[k] + ".test.json"), split.test);
    std::cout << scenes[k] << ": " << split.train.size() << " train, " << split.test.size()
              << " test windows\n";
  }
  write_resolved(r.out_dir, r.cmd);
  return 0;
}

int cmd_train(Run r) {
  TrainConfig& cfg = r.train;
  cfg.partial = r.model.partial;
  cfg.sparsity = r.model.sparsity;
  cfg.neighbors = r.model.neighbors;
  cfg.seed = r.seed;
  const auto scenes = resolve_scenes(r.data);
  std::vector<std::vector<TrajectoryWindow>> data;
  for (const auto& scene : scenes) data.push_back(phase_windows(r.data, scene, true));
  const int variant = cfg.variant();
  std::cerr << "training variant " << (variant ? std::to_string(variant) : "custom") << " on "
            << scenes.size() << " scene(s)\n";
  ensure_dir(r.out_dir);
  write_resolved(r.out_dir, r.cmd);
  for (std::size_t k = 0; k < scenes.size(); ++k) {
    const fs::path dir = fs::path(r.out_dir) / scenes[k];
    ensure_dir(dir / "checkpoints");
    TrainOptions opts;
    opts.checkpoint_dir = dir / "checkpoints";
    opts.on_epoch = [&](const EpochLog& e) {
      std::cerr << scenes[k] << " epoch " << e.epoch << "/" << cfg.epochs << " loss " << e.loss
                << " tau " << e.tau << " (" << e.seconds << " s)\n";
    };
    const TrainResult result = train(data[k], cfg, opts);
    std::ofstream log = open_out(dir / "train_log.csv");
    write_train_log_csv(log, result.log);
    std::cout << scenes[k] << ": " << data[k].size() << " windows, final loss "
              << result.log.epochs.back().loss << ", checkpoint " << (dir / "checkpoints/final.json").string()
              << "\n";
  }
  return 0;
}

int cmd_evaluate(const Run& r) {
  const auto scenes = resolve_scenes(r.data);
  std::vector<MetricReport> reports;
  for (const auto& scene : scenes) {
    ModelConfig config;
    int variant = 0;
    bool partial = true;
    const Checkpoint ck = load_model(r, default_checkpoint(r, scene), config, variant, partial);
    EvalOptions o;
    o.rollouts = r.rollouts;
    o.tau = r.tau;
    o.mode = parse_sample_mode(r.mode);
    o.seed = r.seed;
    o.partial = partial;
    o.scene = scene;
    o.config_id = variant;
    reports.push_back(evaluate_model(config, ck.params, phase_windows(r.data, scene, false), o));
  }
  // nothing is written until every scene has been evaluated
  ensure_dir(r.out_dir);
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& rep : reports) doc.push_back(report_to_json(rep));
  write_json(fs::path(r.out_dir) / "metrics.json", doc);
  std::ofstream csv = open_out(fs::path(r.out_dir) / "metrics.csv");
  write_reports_csv(csv, reports);
  write_resolved(r.out_dir, r.cmd);
  for (const auto& rep : reports) {
    if (rep.empty) {
      std::cout << rep.scene << ": no fully observed pedestrian\n";
    } else {
      std::cout << rep.scene << ": AOE " << rep.aoe_mean << " +- " << rep.aoe_std << "  FOE "
                << rep.foe_mean << " +- " << rep.foe_std << "  (" << rep.rollouts << " rollouts, "
                << rep.windows << " windows)\n";
    }
  }
  return 0;
}

int cmd_predict(const Run& r) {
  const auto scenes = resolve_scenes(r.data);
  if (scenes.size() != 1) throw std::invalid_argument("predict takes exactly one --scene");
  const std::string& scene = scenes[0];
  ModelConfig config;
  int variant = 0;
  bool partial = true;
  const Checkpoint ck = load_model(r, default_checkpoint(r, scene), config, variant, partial);
  const auto windows = phase_windows(r.data, scene, false);
  if (r.window >= windows.size()) {
    throw std::invalid_argument("--window " + std::to_string(r.window) + " but only " +
                                std::to_string(windows.size()) + " test windows");
  }
  EvalOptions o;
  o.tau = r.tau;
  o.mode = parse_sample_mode(r.mode);
  o.partial = partial;
  const TrajectoryWindow& w = windows[r.window];
  const PredictionRollout pr = predict_window(config, ck.params, w, o, r.seed);
  nlohmann::json doc = rollout_to_json(pr);
  doc["scene"] = scene;
  doc["start_frame"] = w.start_frame;
  doc["pedestrian_ids"] = model_input(w, partial).pedestrian_ids;
  doc["config_id"] = variant;
  ensure_dir(r.out_dir);
  const fs::path path = fs::path(r.out_dir) / ("predict_" + scene + "_" + std::to_string(r.window) + ".json");
  write_json(path, doc);
  write_resolved(r.out_dir, r.cmd);
  std::cout << path.string() << "\n";
  return 0;
}

int cmd_simulate(const Run& r) {
  ModelConfig config;
  int variant = 0;
  ParamStore params;
  if (r.untrained) {
    config.sparsity = r.model.sparsity;
    config.neighbors = r.model.neighbors;
    variant = variant_id(r.model.partial, r.model.sparsity, r.model.neighbors);
    if (variant == 0) throw std::invalid_argument("flags do not name one of the variants 1-8");
    params = init_params(config, r.seed);
  } else {
    bool partial = true;
    params = load_model(r, {}, config, variant, partial).params;
  }
  const SceneGeometry geometry = r.geometry.empty() ? SceneGeometry{} : load_geometry(r.geometry);
  std::vector<ScenarioId> ids;
  if (r.scenarios.size() == 1 && r.scenarios[0] == "all") {
    ids = all_scenarios();
  } else {
    for (const auto& s : r.scenarios) ids.push_back(parse_scenario_id(s));
  }
  SimOptions o;
  o.seeds.clear();
  for (std::size_t k = 0; k < r.rollouts; ++k) o.seeds.push_back(r.seed + k);
  o.tau = r.tau;
  o.mode = parse_sample_mode(r.mode);
  std::vector<SimResult> results;
  for (ScenarioId id : ids) {
    results.push_back(run_scenario(build_scenario(id, r.seed, geometry), config, params, variant, o));
  }
  ensure_dir(r.out_dir);
  for (const auto& res : results) {
    const std::string stem = "sim_" + to_string(res.scenario);
    write_json(fs::path(r.out_dir) / (stem + ".json"), sim_to_json(res));
    std::ofstream csv = open_out(fs::path(r.out_dir) / (stem + ".csv"));
    write_sim_csv(csv, res);
    std::cout << stem << ": " << res.agent_names.size() << " agents, " << res.rollouts.size()
              << " rollouts\n";
  }
  std::ofstream geo = open_out(fs::path(r.out_dir) / "geometry.txt");
  write_geometry(geo, geometry);
  write_resolved(r.out_dir, r.cmd);
  return 0;
}

int cmd_stats(const Run& r) {
  const auto scenes = resolve_scenes(r.data);
  nlohmann::json doc;
  std::ostringstream table;
  table << "scene,windows,instances,partial_fraction\n";
  auto row = [&table](const std::string& name, const std::vector<TrajectoryWindow>& ws) {
    std::size_t instances = 0;
    for (const auto& w : ws) instances += w.num_peds();
    const double frac = instances ? partial_fraction(ws) : 0.0;
    table << name << ',' << ws.size() << ',' << instances << ',' << frac << '\n';
    return nlohmann::json{{"windows", ws.size()}, {"pedestrian_instances", instances},
                          {"partial_fraction", frac}};
  };
  std::vector<TrajectoryWindow> pooled;
  for (const auto& scene : scenes) {
    auto ws = scene_windows(r.data, scene, r.data.stride);
    doc["scenes"][scene] = row(scene, ws);
    pooled.insert(pooled.end(), ws.begin(), ws.end());
  }
  doc["total"] = row("total", pooled);
  std::cout << table.str();
  doc["stride"] = r.data.stride;
  ensure_dir(r.out_dir);
  write_json(fs::path(r.out_dir) / "stats.json", doc);
  write_resolved(r.out_dir, r.cmd);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trajectory prediction with a sparse sampled interaction graph"};
  app.name("gst");
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.add_option("--config", "key = value file of option defaults (any position)");

  Run r;
  r.data.data_root = data_root_default();
  r.data.scenes = {"all"};

  auto* prepare = app.add_subcommand("prepare", "window scenes and write train/test caches");
  add_data_options(prepare, r.data, true, 1);

  auto* train = app.add_subcommand("train", "train one model per scene");
  add_data_options(train, r.data, true, 1);
  add_model_flags(train, r.model, true);
  train->add_option("--epochs", r.train.epochs)->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--learning-rate", r.train.learning_rate)->capture_default_str();
  train->add_option("--tau-start", r.train.tau_start)->capture_default_str();
  train->add_option("--tau-end", r.train.tau_end)->capture_default_str();
  train->add_option("--batch-size", r.train.batch_size)->capture_default_str()->check(CLI::PositiveNumber);
  bool_flag(train, "--rotate", r.train.rotate, "random rotation augmentation");
  train->add_option("--clip-norm", r.train.clip_norm)->capture_default_str();
  train->add_option("--checkpoint-every", r.train.checkpoint_every)->capture_default_str();
  train->add_option("--seed", r.seed, "random seed")->capture_default_str();

  auto* evaluate = app.add_subcommand("evaluate", "AOE/FOE on the test split");
  add_data_options(evaluate, r.data, true, 1);
  add_model_flags(evaluate, r.model, false);
  add_sampling_options(evaluate, r);
  evaluate->add_option("--rollouts", r.rollouts)->capture_default_str()->check(CLI::PositiveNumber);

  auto* predict = app.add_subcommand("predict", "one rollout of one test window as JSON");
  add_data_options(predict, r.data, true, 1);
  add_model_flags(predict, r.model, false);
  add_sampling_options(predict, r);
  predict->add_option("--window", r.window, "test window index")->capture_default_str();

  auto* simulate = app.add_subcommand("simulate", "scripted crowd scenarios");
  add_model_flags(simulate, r.model, false);
  add_sampling_options(simulate, r);
  simulate->add_option("--rollouts", r.rollouts, "rollouts (seeds seed..seed+k-1)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  simulate->add_option("--scenario", r.scenarios, "late-entry, robot-vs-crowd, random-walkers or all")
      ->delimiter(',')
      ->default_str("all");
  simulate->add_option("--geometry", r.geometry, "scene geometry file");
  bool_flag(simulate, "--untrained", r.untrained, "freshly initialised weights from --seed and the model flags");

  auto* stats = app.add_subcommand("stats", "windows and partial-observation share per scene");
  add_data_options(stats, r.data, true, 20);

  for (CLI::App* cmd : {prepare, train, evaluate, predict, simulate, stats}) {
    cmd->add_option("--out-dir", r.out_dir, "output directory")->capture_default_str();
  }
  for (CLI::App* cmd : {evaluate, predict, simulate}) {
    cmd->add_option("--checkpoint", r.checkpoint, "checkpoint file (default <out-dir>/<scene>/checkpoints/final.json)");
  }
  for (CLI::App* cmd : {prepare, train, evaluate, predict}) {
    cmd->add_option("--windows", r.data.windows_file, "window cache from prepare, instead of a scene");
    cmd->add_option("--every", r.data.every, "keep every k-th window")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    cmd->add_option("--split", r.data.split, "train share of the chronological split")
        ->capture_default_str()
        ->check(CLI::Range(0.0, 1.0));
  }

  try {
    std::vector<std::string> args = expand_config(argc, argv);
    std::reverse(args.begin(), args.end());
    app.parse(args);
    if (!r.data.windows_file.empty() && r.data.scenes == std::vector<std::string>{"all"}) {
      r.data.scenes = {fs::path(r.data.windows_file).stem().stem().string()};
    }
    r.cmd = app.get_subcommands().front();
    if (const CLI::Option* stride = r.cmd->get_option_no_throw("--stride"); stride && stride->count() == 0) {
      r.data.stride = std::stoul(stride->get_default_str());
    }
    const std::string name = r.cmd->get_name();
    if (name == "prepare") return cmd_prepare(r);
    if (name == "train") return cmd_train(r);
    if (name == "evaluate") return cmd_evaluate(r);
    if (name == "predict") return cmd_predict(r);
    if (name == "simulate") return cmd_simulate(r);
    return cmd_stats(r);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "gst: " << e.what() << " (see --help)\n";
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "gst: " << e.what() << "\n";
    return kExitIo;
  } catch (const FormatError& e) {
    std::cerr << "gst: " << e.what() << "\n";
    return kExitIo;
  } catch (const ConfigMismatch& e) {
    std::cerr << "gst: " << e.what() << "\n";
    return kExitMismatch;
  } catch (const NumericalError& e) {
    std::cerr << "gst: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "gst: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "gst: " << e.what() << "\n";
    return 1;
  }
}
