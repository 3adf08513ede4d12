#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "gst/dataset.hpp"
#include "gst/masked_lstm.hpp"
#include "gst/model_config.hpp"
#include "gst/params.hpp"

namespace gst {

double offset_error(std::array<double, 2> pred, std::array<double, 2> truth);

/// Offset error of pedestrian `ped` at prediction step `step` (0-based);
/// `predicted` is [T_pred, N, 2]. Throws std::invalid_argument when the
/// prediction is invalid or the pedestrian is absent from the ground truth.
double offset_error(const Tensor& predicted, const Mask& predicted_valid,
                    const TrajectoryWindow& truth, std::size_t step, std::size_t ped,
                    std::size_t obs_steps = kObsSteps);

/// Predicted positions of one window, as plain values.
struct WindowPrediction {
  Tensor positions;  // [T_pred, N, 2]
  Mask valid;
};

struct MetricReport {
  std::string scene;
  int config_id = 0;
  std::size_t rollouts = 0;
  std::size_t windows = 0;
  std::size_t pedestrians = 0;  // fully observed (window, pedestrian) instances scored
  std::size_t partial_pedestrians = 0;
  bool empty = true;  // nobody fully observed: no metric available
  double aoe_mean = 0.0;
  double aoe_std = 0.0;
  double foe_mean = 0.0;
  double foe_std = 0.0;
  std::vector<double> aoe_per_rollout;
  std::vector<double> foe_per_rollout;
};

/// predictions[r][w] is rollout r of truth[w]. AOE pools every
/// (fully observed pedestrian, prediction step) pair of a rollout; FOE pools
/// the last step. Mean and population std are taken across rollouts.
MetricReport aoe_foe(const std::vector<std::vector<WindowPrediction>>& predictions,
                     const std::vector<TrajectoryWindow>& truth,
                     std::size_t obs_steps = kObsSteps);

struct EvalOptions {
  std::size_t rollouts = 20;
  double tau = 0.03;
  SampleMode mode = SampleMode::soft;
  std::uint64_t seed = 0;
  bool partial = true;  // feed partially observed pedestrians to the model
  std::string scene;
  int config_id = 0;
};

/// Seed used for rollout r of window w.
std::uint64_t rollout_seed(std::uint64_t seed, std::size_t rollout, std::size_t window);

/// Window as the model sees it: only_fully_observed(window) when partial
/// input is off.
TrajectoryWindow model_input(const TrajectoryWindow& window, bool partial);

/// One prediction for model_input(window, options.partial).
PredictionRollout predict_window(const ModelConfig& config, const ParamStore& params,
                                 const TrajectoryWindow& window, const EvalOptions& options,
                                 std::uint64_t seed);

MetricReport evaluate_model(const ModelConfig& config, const ParamStore& params,
                            const std::vector<TrajectoryWindow>& windows,
                            const EvalOptions& options);

nlohmann::json report_to_json(const MetricReport& report);
void write_reports_csv(std::ostream& out, const std::vector<MetricReport>& reports);

/// Per-step positions, validity and sampled adjacency of a rollout.
nlohmann::json rollout_to_json(const PredictionRollout& rollout);

}  // namespace gst
