#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "gst/masked_lstm.hpp"
#include "gst/model_config.hpp"
#include "gst/params.hpp"

namespace gst {

enum class ScenarioId { late_entry, robot_vs_crowd, random_walkers };

std::string to_string(ScenarioId id);
ScenarioId parse_scenario_id(const std::string& text);  // throws std::invalid_argument
std::vector<ScenarioId> all_scenarios();

/// Arena and kinematics shared by every scenario.
struct SceneGeometry {
  double width = 10.0;   // m
  double height = 6.0;   // m
  double step_seconds = 0.4;
  double walk_speed = 1.2;  // m/s
  double run_speed = 2.0;   // m/s
  double crowd_spacing = 0.8;  // m between formation members
  double walker_turn_std = 0.5;  // rad per step for random walkers

  bool operator==(const SceneGeometry&) const = default;
};

/// key = value manifest with the SceneGeometry field names.
SceneGeometry parse_geometry(std::istream& in, SceneGeometry base = {});
SceneGeometry load_geometry(const std::filesystem::path& path);
void write_geometry(std::ostream& out, const SceneGeometry& geometry);

struct AgentScript {
  std::string name;
  int entry_step = 1;  // 1-based, inclusive
  int exit_step = 8;   // 1-based, inclusive
  std::array<double, 2> start{};                  // position at entry_step
  std::vector<std::array<double, 2>> velocity;    // m/s for the step after entry_step + k

  bool present(int step) const { return step >= entry_step && step <= exit_step; }
};

struct Scenario {
  ScenarioId id = ScenarioId::late_entry;
  std::uint64_t seed = 0;
  SceneGeometry geometry;
  int steps = 8;
  std::vector<AgentScript> agents;  // agents[0] is the robot

  /// Scripted positions and presence for every step.
  ObservedWindow observation() const;
};

Scenario build_scenario(ScenarioId id, std::uint64_t seed, const SceneGeometry& geometry = {});

struct SimRollout {
  std::uint64_t seed = 0;
  Tensor positions;  // [T_pred, N, 2]
  Mask valid;
  std::vector<GraphSample> graphs;
};

struct SimResult {
  ScenarioId scenario = ScenarioId::late_entry;
  int config_id = 0;
  SampleMode mode = SampleMode::soft;
  double tau = 0.03;
  SceneGeometry geometry;
  std::vector<std::string> agent_names;
  ObservedWindow observation;  // as fed to the model
  std::vector<SimRollout> rollouts;
};

struct SimOptions {
  std::vector<std::uint64_t> seeds{0};
  double tau = 0.03;
  SampleMode mode = SampleMode::soft;
  std::size_t pred_steps = 12;
};

/// Runs the model recursively from the scripted observation once per seed.
/// `config_id` selects one of the variants 1-8; its sparsity and neighbour
/// cap must match `config`, and `params` must match `config`, otherwise
/// ConfigMismatch. Variants without partial input do not see agents missing
/// from part of the observation.
SimResult run_scenario(const Scenario& scenario, const ModelConfig& config,
                       const ParamStore& params, int config_id, const SimOptions& options);

nlohmann::json sim_to_json(const SimResult& result);
/// Flat rows: phase,seed,step,agent,x,y,mask
void write_sim_csv(std::ostream& out, const SimResult& result);

}  // namespace gst
