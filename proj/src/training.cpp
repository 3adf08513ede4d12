#include "gst/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "gst/adam.hpp"
#include "gst/errors.hpp"
#include "gst/rng.hpp"

namespace gst {

ModelConfig TrainConfig::model() const {
  ModelConfig m;
  m.sparsity = sparsity;
  m.neighbors = sparsity ? neighbors : 1;
  return m;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("config: '" + key + "' expects a boolean, got '" + v + "'");
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  std::istringstream in(v);
  T out{};
  in >> out;
  if (!in || !in.eof()) {
    throw std::invalid_argument("config: '" + key + "' expects a number, got '" + v + "'");
  }
  return out;
}

}  // namespace

void apply_config_entry(TrainConfig& c, const std::string& key, const std::string& value) {
  if (key == "epochs") c.epochs = parse_number<int>(key, value);
  else if (key == "learning_rate") c.learning_rate = parse_number<double>(key, value);
  else if (key == "tau_start") c.tau_start = parse_number<double>(key, value);
  else if (key == "tau_end") c.tau_end = parse_number<double>(key, value);
  else if (key == "neighbors") c.neighbors = parse_number<std::size_t>(key, value);
  else if (key == "partial") c.partial = parse_bool(key, value);
  else if (key == "sparsity") c.sparsity = parse_bool(key, value);
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "batch_size") c.batch_size = parse_number<std::size_t>(key, value);
  else if (key == "rotate") c.rotate = parse_bool(key, value);
  else if (key == "clip_norm") c.clip_norm = parse_number<double>(key, value);
  else if (key == "checkpoint_every") c.checkpoint_every = parse_number<int>(key, value);
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

TrainConfig parse_train_config(std::istream& in, TrainConfig base) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected 'key = value'");
    }
    apply_config_entry(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return base;
}

TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  return parse_train_config(in, base);
}

void write_train_config(std::ostream& out, const TrainConfig& c) {
  out << std::boolalpha << std::setprecision(17);
  out << "epochs = " << c.epochs << '\n'
      << "learning_rate = " << c.learning_rate << '\n'
      << "tau_start = " << c.tau_start << '\n'
      << "tau_end = " << c.tau_end << '\n'
      << "neighbors = " << c.neighbors << '\n'
      << "partial = " << c.partial << '\n'
      << "sparsity = " << c.sparsity << '\n'
      << "seed = " << c.seed << '\n'
      << "batch_size = " << c.batch_size << '\n'
      << "rotate = " << c.rotate << '\n'
      << "clip_norm = " << c.clip_norm << '\n'
      << "checkpoint_every = " << c.checkpoint_every << '\n';
}

double anneal_tau(int epoch, const TrainConfig& config) {
  if (epoch < 1 || epoch > config.epochs) {
    throw std::invalid_argument("anneal_tau: epoch " + std::to_string(epoch) + " outside 1.." +
                                std::to_string(config.epochs));
  }
  if (config.epochs == 1) return config.tau_start;
  const double frac = static_cast<double>(epoch - 1) / static_cast<double>(config.epochs - 1);
  return config.tau_start + frac * (config.tau_end - config.tau_start);
}

namespace {

bool counts_for_loss(const TrajectoryWindow& truth, const Mask& predicted, bool fully_only,
                     std::size_t step, std::size_t ped) {
  return predicted[ped] && truth.presence[step][ped] && (!fully_only || truth.fully_observed[ped]);
}

}  // namespace

std::size_t loss_term_count(const TrajectoryWindow& truth, bool fully_observed_only,
                            std::size_t obs_steps) {
  if (truth.num_peds() == 0 || truth.steps() <= obs_steps) return 0;
  const Mask& predicted = truth.presence[obs_steps - 1];
  std::size_t terms = 0;
  for (std::size_t t = obs_steps; t < truth.steps(); ++t) {
    for (std::size_t i = 0; i < truth.num_peds(); ++i) {
      if (counts_for_loss(truth, predicted, fully_observed_only, t, i)) terms += 2;
    }
  }
  return terms;
}

SquaredError squared_error(const PredictionRollout& prediction, const TrajectoryWindow& truth,
                           bool fully_observed_only, std::size_t obs_steps) {
  const std::size_t n = truth.num_peds();
  if (prediction.valid.size() != n || obs_steps + prediction.positions.size() > truth.steps()) {
    throw ShapeError("squared_error: rollout of " + std::to_string(prediction.positions.size()) +
                     " steps x " + std::to_string(prediction.valid.size()) +
                     " pedestrians does not fit a window of " + std::to_string(truth.steps()) +
                     " steps x " + std::to_string(n));
  }
  SquaredError out;
  std::vector<Var> parts;
  for (std::size_t s = 0; s < prediction.positions.size(); ++s) {
    const std::size_t t = obs_steps + s;
    Tensor weight({n, 2});
    for (std::size_t i = 0; i < n; ++i) {
      if (counts_for_loss(truth, prediction.valid, fully_observed_only, t, i)) {
        weight[2 * i] = weight[2 * i + 1] = 1.0;
        out.terms += 2;
      }
    }
    const Var diff = mul_const(sub(prediction.positions[s], constant(truth.positions_at(t))), weight);
    parts.push_back(sum(mul(diff, diff)));
  }
  out.total = sum(concat(parts, 0));
  return out;
}

Var masked_mse(const PredictionRollout& prediction, const TrajectoryWindow& truth,
               bool fully_observed_only, std::size_t obs_steps) {
  const SquaredError se = squared_error(prediction, truth, fully_observed_only, obs_steps);
  if (se.terms == 0) {
    throw std::invalid_argument("masked_mse: window has no valid prediction terms");
  }
  return scale(se.total, 1.0 / static_cast<double>(se.terms));
}

void write_train_log_csv(std::ostream& out, const TrainLog& log) {
  out << "epoch,loss,tau,seconds\n" << std::setprecision(10);
  for (const auto& e : log.epochs) {
    out << e.epoch << ',' << e.loss << ',' << e.tau << ',' << e.seconds << '\n';
  }
}

std::vector<TrajectoryWindow> prepare_training_windows(const std::vector<TrajectoryWindow>& windows,
                                                       const TrainConfig& config) {
  std::vector<TrajectoryWindow> out;
  for (const auto& w : windows) {
    TrajectoryWindow use = config.partial ? w : only_fully_observed(w);
    if (use.num_peds() == 0 || loss_term_count(use, !config.partial) == 0) continue;
    out.push_back(std::move(use));
  }
  return out;
}

nlohmann::json checkpoint_metadata(const TrainConfig& config, int epoch) {
  std::ostringstream cfg;
  write_train_config(cfg, config);
  return {{"model", config.model()},
          {"variant", config.variant()},
          {"partial", config.partial},
          {"epoch", epoch},
          {"train_config", cfg.str()}};
}

TrainResult train(const std::vector<TrajectoryWindow>& windows, const TrainConfig& config,
                  const TrainOptions& options) {
  if (config.epochs < 1) {
    throw std::invalid_argument("train: at least one epoch is required");
  }
  if (config.batch_size < 1) {
    throw std::invalid_argument("train: batch size must be at least 1");
  }
  const std::vector<TrajectoryWindow> data = prepare_training_windows(windows, config);
  if (data.empty()) {
    throw std::invalid_argument("train: no window has a valid prediction target");
  }
  const ModelConfig model_config = config.model();
  const bool fully_only = !config.partial;

  TrainResult result;
  result.params = init_params(model_config, config.seed);
  AdamState adam;
  adam.learning_rate = config.learning_rate;
  double best_loss = std::numeric_limits<double>::infinity();

  auto save = [&](const std::string& file, int epoch) {
    const auto path = options.checkpoint_dir / file;
    save_checkpoint(path, {result.params, checkpoint_metadata(config, epoch)});
    result.log.checkpoints.push_back(path);
  };

  std::vector<std::size_t> order(data.size());
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const double tau = anneal_tau(epoch, config);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng = make_rng(config.seed, {0x5A1F, static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double epoch_sse = 0.0;
    std::size_t epoch_terms = 0;
    for (std::size_t start = 0, batch = 0; start < order.size(); start += config.batch_size, ++batch) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      std::size_t batch_terms = 0;
      for (std::size_t b = start; b < stop; ++b) batch_terms += loss_term_count(data[order[b]], fully_only);

      GradientMap grads;
      double batch_sse = 0.0;
      for (std::size_t b = start; b < stop; ++b) {
        const std::size_t idx = order[b];
        const std::uint64_t key_epoch = static_cast<std::uint64_t>(epoch);
        TrajectoryWindow window = data[idx];
        if (config.rotate) {
          Rng angle_rng = make_rng(config.seed, {0xA261, key_epoch, idx});
          const double angle =
              std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(angle_rng);
          window = rotate_augment(window, angle, observed_centroid(window));
        }
        const ParamBinding binding(result.params);
        const ModelBinding model(model_config, binding);
        RolloutOptions ro;
        ro.tau = tau;
        ro.mode = SampleMode::soft;
        ro.seed = stream_seed(config.seed, {0x6E15, key_epoch, idx});
        ro.pred_steps = window.steps() - kObsSteps;
        const PredictionRollout prediction = rollout(model, window.observed(), ro);
        const SquaredError se = squared_error(prediction, window, fully_only);
        const double value = se.total.value().item();
        if (!std::isfinite(value)) {
          throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch) +
                               ", batch " + std::to_string(batch) + ", window " +
                               std::to_string(idx));
        }
        batch_sse += value;
        const Var loss = scale(se.total, 1.0 / static_cast<double>(batch_terms));
        const GradientMap g = binding.gradients(backward(loss));
        if (grads.empty()) {
          grads = g;
        } else {
          for (auto& [name, t] : grads) t += g.at(name);
        }
      }
      epoch_sse += batch_sse;
      epoch_terms += batch_terms;
      const double grad_norm = clip_global_norm(grads, config.clip_norm);
      if (options.on_batch) {
        options.on_batch({epoch, batch, batch_sse / static_cast<double>(batch_terms), grad_norm});
      }
      try {
        adam_step(result.params, grads, adam);
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " (epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(batch) + ")");
      }
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.loss = epoch_sse / static_cast<double>(epoch_terms);
    entry.tau = tau;
    entry.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.log.epochs.push_back(entry);
    if (options.on_epoch) options.on_epoch(entry);

    if (!options.checkpoint_dir.empty()) {
      if (config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0) {
        save("epoch_" + std::to_string(epoch) + ".json", epoch);
      }
      if (entry.loss < best_loss) {
        best_loss = entry.loss;
        save("best.json", epoch);
      }
    }
  }
  if (!options.checkpoint_dir.empty()) save("final.json", config.epochs);
  return result;
}

}  // namespace gst
