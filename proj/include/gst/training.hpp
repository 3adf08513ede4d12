#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "gst/dataset.hpp"
#include "gst/masked_lstm.hpp"
#include "gst/model_config.hpp"
#include "gst/params.hpp"

namespace gst {

struct TrainConfig {
  int epochs = 200;
  double learning_rate = 1e-3;
  double tau_start = 0.5;
  double tau_end = 0.03;
  std::size_t neighbors = 1;
  bool partial = true;
  bool sparsity = true;
  std::uint64_t seed = 0;
  std::size_t batch_size = 8;
  bool rotate = true;
  double clip_norm = 10.0;
  int checkpoint_every = 10;  // 0 disables periodic checkpoints

  ModelConfig model() const;
  int variant() const { return variant_id(partial, sparsity, neighbors); }
};

/// key = value lines with the TrainConfig field names; '#' comments.
/// Unknown keys are rejected.
TrainConfig parse_train_config(std::istream& in, TrainConfig base = {});
TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base = {});
void write_train_config(std::ostream& out, const TrainConfig& config);
void apply_config_entry(TrainConfig& config, const std::string& key, const std::string& value);

/// Linear temperature schedule, tau_start at epoch 1 and tau_end at the last epoch.
double anneal_tau(int epoch, const TrainConfig& config);

/// Number of squared-error terms the loss sums for this window: 2 per
/// (prediction step, pedestrian) where the pedestrian is predicted and
/// present in the ground truth; restricted to fully observed pedestrians when
/// `fully_observed_only`.
std::size_t loss_term_count(const TrajectoryWindow& truth, bool fully_observed_only,
                            std::size_t obs_steps = kObsSteps);

struct SquaredError {
  Var total;  // scalar sum of squared coordinate errors
  std::size_t terms = 0;
};

SquaredError squared_error(const PredictionRollout& prediction, const TrajectoryWindow& truth,
                           bool fully_observed_only, std::size_t obs_steps = kObsSteps);

/// Mean squared coordinate error over every counted term. Throws
/// std::invalid_argument when the window has no terms.
Var masked_mse(const PredictionRollout& prediction, const TrajectoryWindow& truth,
               bool fully_observed_only, std::size_t obs_steps = kObsSteps);

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double tau = 0.0;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  std::vector<std::filesystem::path> checkpoints;
};

void write_train_log_csv(std::ostream& out, const TrainLog& log);

struct BatchLog {
  int epoch = 0;
  std::size_t batch = 0;
  double loss = 0.0;
  double grad_norm = 0.0;  // before clipping
};

struct TrainOptions {
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints
  std::function<void(const EpochLog&)> on_epoch;
  std::function<void(const BatchLog&)> on_batch;
};

struct TrainResult {
  ParamStore params;
  TrainLog log;
};

/// Windows as the model sees them under `config`: restricted to fully observed
/// pedestrians when partial input is off, and without windows that carry no
/// loss terms.
std::vector<TrajectoryWindow> prepare_training_windows(const std::vector<TrajectoryWindow>& windows,
                                                       const TrainConfig& config);

/// Adam over recursive rollouts with linearly annealed temperature. Fully
/// deterministic in config.seed.
TrainResult train(const std::vector<TrajectoryWindow>& windows, const TrainConfig& config,
                  const TrainOptions& options = {});

/// Checkpoint metadata carrying the model configuration and variant.
nlohmann::json checkpoint_metadata(const TrainConfig& config, int epoch);

}  // namespace gst
