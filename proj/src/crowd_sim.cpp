#include "gst/crowd_sim.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "gst/errors.hpp"
#include "gst/rng.hpp"

namespace gst {

std::string to_string(ScenarioId id) {
  switch (id) {
    case ScenarioId::late_entry: return "late-entry";
    case ScenarioId::robot_vs_crowd: return "robot-vs-crowd";
    case ScenarioId::random_walkers: return "random-walkers";
  }
  return "unknown";
}

ScenarioId parse_scenario_id(const std::string& text) {
  for (ScenarioId id : all_scenarios()) {
    if (to_string(id) == text) return id;
  }
  throw std::invalid_argument("unknown scenario '" + text +
                              "' (late-entry, robot-vs-crowd, random-walkers)");
}

std::vector<ScenarioId> all_scenarios() {
  return {ScenarioId::late_entry, ScenarioId::robot_vs_crowd, ScenarioId::random_walkers};
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

double positive(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  double v = 0.0;
  in >> v;
  if (!in || !in.eof() || !(v > 0.0)) {
    throw std::invalid_argument("geometry: '" + key + "' expects a positive number, got '" +
                                value + "'");
  }
  return v;
}

}  // namespace

SceneGeometry parse_geometry(std::istream& in, SceneGeometry g) {
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("geometry: expected 'key = value', got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "width") g.width = positive(key, value);
    else if (key == "height") g.height = positive(key, value);
    else if (key == "step_seconds") g.step_seconds = positive(key, value);
    else if (key == "walk_speed") g.walk_speed = positive(key, value);
    else if (key == "run_speed") g.run_speed = positive(key, value);
    else if (key == "crowd_spacing") g.crowd_spacing = positive(key, value);
    else if (key == "walker_turn_std") g.walker_turn_std = positive(key, value);
    else throw std::invalid_argument("geometry: unknown key '" + key + "'");
  }
  return g;
}

SceneGeometry load_geometry(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scenario manifest " + path.string());
  return parse_geometry(in);
}

void write_geometry(std::ostream& out, const SceneGeometry& g) {
  out << std::setprecision(17) << "width = " << g.width << '\n'
      << "height = " << g.height << '\n'
      << "step_seconds = " << g.step_seconds << '\n'
      << "walk_speed = " << g.walk_speed << '\n'
      << "run_speed = " << g.run_speed << '\n'
      << "crowd_spacing = " << g.crowd_spacing << '\n'
      << "walker_turn_std = " << g.walker_turn_std << '\n';
}

namespace {

using Vec2 = std::array<double, 2>;

AgentScript straight(std::string name, Vec2 start, Vec2 velocity, int entry, int exit) {
  AgentScript a;
  a.name = std::move(name);
  a.entry_step = entry;
  a.exit_step = exit;
  a.start = start;
  a.velocity.assign(static_cast<std::size_t>(std::max(0, exit - entry)), velocity);
  return a;
}

Vec2 position_at(const AgentScript& a, int step, double dt) {
  Vec2 p = a.start;
  for (int k = 0; k < step - a.entry_step; ++k) {
    p[0] += a.velocity[static_cast<std::size_t>(k)][0] * dt;
    p[1] += a.velocity[static_cast<std::size_t>(k)][1] * dt;
  }
  return p;
}

Vec2 toward(Vec2 from, Vec2 to, double speed) {
  const double dx = to[0] - from[0];
  const double dy = to[1] - from[1];
  const double len = std::hypot(dx, dy);
  if (len == 0.0) return {0.0, 0.0};
  return {speed * dx / len, speed * dy / len};
}

}  // namespace

ObservedWindow Scenario::observation() const {
  ObservedWindow out;
  const std::size_t n = agents.size();
  for (int step = 1; step <= steps; ++step) {
    Tensor xy({n, 2});
    Mask present(n, false);
    for (std::size_t i = 0; i < n; ++i) {
      if (!agents[i].present(step)) continue;
      const Vec2 p = position_at(agents[i], step, geometry.step_seconds);
      xy[2 * i] = p[0];
      xy[2 * i + 1] = p[1];
      present[i] = true;
    }
    out.positions.push_back(std::move(xy));
    out.presence.push_back(std::move(present));
  }
  return out;
}

Scenario build_scenario(ScenarioId id, std::uint64_t seed, const SceneGeometry& g) {
  Scenario s;
  s.id = id;
  s.seed = seed;
  s.geometry = g;
  const int last = s.steps;
  const double mid_y = g.height / 2.0;
  const double margin = 1.0;
  s.agents.push_back(straight("robot", {margin, mid_y}, {g.walk_speed, 0.0}, 1, last));

  switch (id) {
    case ScenarioId::late_entry: {
      s.agents.push_back(
          straight("human_1", {g.width - margin, mid_y}, {-g.walk_speed, 0.0}, 1, last));
      const int entry = 5;
      const Vec2 robot = position_at(s.agents[0], entry, g.step_seconds);
      const Vec2 other = position_at(s.agents[1], entry, g.step_seconds);
      const Vec2 target{(robot[0] + other[0]) / 2.0, (robot[1] + other[1]) / 2.0};
      const Vec2 start{target[0], g.height - 0.5};
      s.agents.push_back(straight("human_2", start, toward(start, target, g.walk_speed), entry, last));
      break;
    }
    case ScenarioId::robot_vs_crowd: {
      // two columns of four, centred on the corridor axis
      for (int col = 0; col < 2; ++col) {
        for (int row = 0; row < 4; ++row) {
          const Vec2 start{g.width - margin - 1.0 + col * g.crowd_spacing,
                           mid_y + (row - 1.5) * g.crowd_spacing};
          s.agents.push_back(straight("human_" + std::to_string(col * 4 + row + 1), start,
                                      {-g.walk_speed, 0.0}, 1, last));
        }
      }
      break;
    }
    case ScenarioId::random_walkers: {
      const Vec2 runner_start{g.width - margin, mid_y};
      const Vec2 robot_at_end = position_at(s.agents[0], last, g.step_seconds);
      s.agents.push_back(straight("runner", runner_start,
                                  toward(runner_start, robot_at_end, g.run_speed), 1, last));
      Rng rng = make_rng(seed, {0x3A1C});
      std::normal_distribution<double> turn(0.0, g.walker_turn_std);
      const double edge = 0.5;
      const double band = 2.0;  // walkers keep within 2 m of their wall
      for (int w = 0; w < 6; ++w) {
        AgentScript a;
        a.name = "walker_" + std::to_string(w + 1);
        a.entry_step = 1;
        a.exit_step = last;
        const bool top = w % 2 == 0;
        a.start = {g.width * (0.2 + 0.3 * (w / 2)), top ? g.height - edge : edge};
        double heading = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
        Vec2 p = a.start;
        for (int k = 0; k < last - 1; ++k) {
          heading += turn(rng);
          Vec2 v{g.walk_speed * std::cos(heading), g.walk_speed * std::sin(heading)};
          // stay near the boundary band: reflect off the arena and the inner edge
          const double nx = p[0] + v[0] * g.step_seconds;
          const double ny = p[1] + v[1] * g.step_seconds;
          if (nx < 0.0 || nx > g.width) v[0] = -v[0];
          const double lo = top ? g.height - band : 0.0;
          const double hi = top ? g.height : band;
          if (ny < lo || ny > hi) v[1] = -v[1];
          heading = std::atan2(v[1], v[0]);
          p = {p[0] + v[0] * g.step_seconds, p[1] + v[1] * g.step_seconds};
          a.velocity.push_back(v);
        }
        s.agents.push_back(std::move(a));
      }
      break;
    }
  }
  return s;
}

SimResult run_scenario(const Scenario& scenario, const ModelConfig& config,
                       const ParamStore& params, int config_id, const SimOptions& options) {
  const std::optional<Variant> found = variant_by_id(config_id);
  if (!found) {
    throw std::invalid_argument("unknown configuration id " + std::to_string(config_id));
  }
  const Variant& variant = *found;
  if (variant.sparsity != config.sparsity ||
      (variant.sparsity && variant.neighbors != config.neighbors)) {
    throw ConfigMismatch("configuration " + std::to_string(config_id) +
                         " does not match the checkpoint's model (sparsity " +
                         (config.sparsity ? "on" : "off") + ", n=" +
                         std::to_string(config.neighbors) + ")");
  }
  check_params(config, params);
  if (options.seeds.empty()) {
    throw std::invalid_argument("run_scenario: at least one seed is required");
  }

  SimResult result;
  result.scenario = scenario.id;
  result.config_id = config_id;
  result.mode = options.mode;
  result.tau = options.tau;
  result.geometry = scenario.geometry;
  for (const auto& a : scenario.agents) result.agent_names.push_back(a.name);
  result.observation = scenario.observation();
  if (!variant.partial) {
    // agents missing from part of the observation are hidden from the model
    const std::size_t n = result.observation.num_peds();
    for (std::size_t i = 0; i < n; ++i) {
      bool full = true;
      for (const auto& m : result.observation.presence) full = full && m[i];
      if (full) continue;
      for (std::size_t t = 0; t < result.observation.steps(); ++t) {
        result.observation.presence[t][i] = false;
        result.observation.positions[t][2 * i] = 0.0;
        result.observation.positions[t][2 * i + 1] = 0.0;
      }
    }
  }

  const ParamBinding binding(params);
  const ModelBinding model(config, binding);
  for (std::uint64_t seed : options.seeds) {
    RolloutOptions ro;
    ro.tau = options.tau;
    ro.mode = options.mode;
    ro.seed = seed;
    ro.pred_steps = options.pred_steps;
    PredictionRollout pr = rollout(model, result.observation, ro);
    result.rollouts.push_back({seed, pr.position_values(), pr.valid, std::move(pr.graphs)});
  }
  return result;
}

namespace {

nlohmann::json agents_json(const Tensor& xy, const Mask& mask) {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    out.push_back({{"x", xy[2 * i]}, {"y", xy[2 * i + 1]}, {"mask", static_cast<bool>(mask[i])}});
  }
  return out;
}

Tensor step_slice(const Tensor& positions, std::size_t step) {
  const std::size_t n = positions.dim(1);
  Tensor out({n, 2});
  for (std::size_t k = 0; k < 2 * n; ++k) out[k] = positions[step * 2 * n + k];
  return out;
}

}  // namespace

nlohmann::json sim_to_json(const SimResult& r) {
  std::ostringstream geometry;
  write_geometry(geometry, r.geometry);
  nlohmann::json obs = nlohmann::json::array();
  for (std::size_t t = 0; t < r.observation.steps(); ++t) {
    obs.push_back(agents_json(r.observation.positions[t], r.observation.presence[t]));
  }
  nlohmann::json rollouts = nlohmann::json::array();
  for (const auto& ro : r.rollouts) {
    nlohmann::json steps = nlohmann::json::array();
    for (std::size_t s = 0; s < ro.positions.dim(0); ++s) {
      steps.push_back(agents_json(step_slice(ro.positions, s), ro.valid));
    }
    nlohmann::json graphs = nlohmann::json::array();
    for (const auto& g : ro.graphs) {
      graphs.push_back({{"timestep", g.timestep},
                        {"node_mask", g.node_mask},
                        {"adjacency", g.adjacency.vec()},
                        {"size", g.adjacency.rows()}});
    }
    rollouts.push_back({{"seed", ro.seed}, {"steps", steps}, {"graphs", graphs}});
  }
  return {{"scenario", to_string(r.scenario)},
          {"config_id", r.config_id},
          {"mode", to_string(r.mode)},
          {"tau", r.tau},
          {"geometry", geometry.str()},
          {"agents", r.agent_names},
          {"observation", obs},
          {"rollouts", rollouts}};
}

void write_sim_csv(std::ostream& out, const SimResult& r) {
  out << "phase,seed,step,agent,x,y,mask\n" << std::setprecision(10);
  for (std::size_t t = 0; t < r.observation.steps(); ++t) {
    for (std::size_t i = 0; i < r.agent_names.size(); ++i) {
      out << "observed,," << t + 1 << ',' << r.agent_names[i] << ','
          << r.observation.positions[t][2 * i] << ',' << r.observation.positions[t][2 * i + 1]
          << ',' << (r.observation.presence[t][i] ? 1 : 0) << '\n';
    }
  }
  const std::size_t obs = r.observation.steps();
  for (const auto& ro : r.rollouts) {
    for (std::size_t s = 0; s < ro.positions.dim(0); ++s) {
      for (std::size_t i = 0; i < r.agent_names.size(); ++i) {
        const std::size_t k = (s * r.agent_names.size() + i) * 2;
        out << "predicted," << ro.seed << ',' << obs + s + 1 << ',' << r.agent_names[i] << ','
            << ro.positions[k] << ',' << ro.positions[k + 1] << ',' << (ro.valid[i] ? 1 : 0)
            << '\n';
      }
    }
  }
}

}  // namespace gst
