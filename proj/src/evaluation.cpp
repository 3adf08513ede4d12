#include "gst/evaluation.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>

#include "gst/rng.hpp"

namespace gst {

double offset_error(std::array<double, 2> pred, std::array<double, 2> truth) {
  return std::hypot(pred[0] - truth[0], pred[1] - truth[1]);
}

double offset_error(const Tensor& predicted, const Mask& predicted_valid,
                    const TrajectoryWindow& truth, std::size_t step, std::size_t ped,
                    std::size_t obs_steps) {
  const std::size_t n = truth.num_peds();
  if (predicted.rank() != 3 || predicted.dim(1) != n || predicted.dim(2) != 2 ||
      predicted_valid.size() != n) {
    throw ShapeError("offset_error: predictions " + shape_str(predicted.shape()) + " for " +
                     std::to_string(n) + " pedestrians");
  }
  if (step >= predicted.dim(0) || obs_steps + step >= truth.steps() || ped >= n) {
    throw std::invalid_argument("offset_error: step " + std::to_string(step) + " or pedestrian " +
                                std::to_string(ped) + " out of range");
  }
  const std::size_t t = obs_steps + step;
  if (!predicted_valid[ped] || !truth.presence[t][ped]) {
    throw std::invalid_argument("offset_error: pedestrian " + std::to_string(ped) +
                                " is not valid at prediction step " + std::to_string(step + 1));
  }
  const std::size_t p = (step * n + ped) * 2;
  const std::size_t q = (t * n + ped) * 2;
  return offset_error({predicted[p], predicted[p + 1]},
                      {truth.positions[q], truth.positions[q + 1]});
}

namespace {

void mean_std(const std::vector<double>& xs, double& mean, double& stddev) {
  // shifted by the first sample, so identical rollouts give exactly zero spread
  double shift = 0.0;
  for (double x : xs) shift += x - xs.front();
  mean = xs.front() + shift / static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  stddev = std::sqrt(var / static_cast<double>(xs.size()));
}

}  // namespace

MetricReport aoe_foe(const std::vector<std::vector<WindowPrediction>>& predictions,
                     const std::vector<TrajectoryWindow>& truth, std::size_t obs_steps) {
  MetricReport report;
  report.rollouts = predictions.size();
  report.windows = truth.size();
  for (const auto& w : truth) {
    for (std::size_t i = 0; i < w.num_peds(); ++i) {
      (w.fully_observed[i] ? report.pedestrians : report.partial_pedestrians) += 1;
    }
  }
  if (predictions.empty()) {
    throw std::invalid_argument("aoe_foe: at least one rollout is required");
  }
  for (const auto& r : predictions) {
    if (r.size() != truth.size()) {
      throw std::invalid_argument("aoe_foe: a rollout covers " + std::to_string(r.size()) +
                                  " windows, expected " + std::to_string(truth.size()));
    }
  }
  if (report.pedestrians == 0) {
    return report;
  }
  report.empty = false;

  for (const auto& rollout : predictions) {
    double aoe_sum = 0.0;
    double foe_sum = 0.0;
    std::size_t aoe_terms = 0;
    std::size_t foe_terms = 0;
    for (std::size_t w = 0; w < truth.size(); ++w) {
      const TrajectoryWindow& window = truth[w];
      const WindowPrediction& pred = rollout[w];
      const std::size_t horizon = window.steps() - obs_steps;
      if (window.num_peds() > 0 && pred.positions.dim(0) < horizon) {
        throw std::invalid_argument("aoe_foe: prediction shorter than the window horizon");
      }
      for (std::size_t i = 0; i < window.num_peds(); ++i) {
        if (!window.fully_observed[i]) continue;
        for (std::size_t s = 0; s < horizon; ++s) {
          const double e = offset_error(pred.positions, pred.valid, window, s, i, obs_steps);
          aoe_sum += e;
          ++aoe_terms;
          if (s + 1 == horizon) {
            foe_sum += e;
            ++foe_terms;
          }
        }
      }
    }
    report.aoe_per_rollout.push_back(aoe_sum / static_cast<double>(aoe_terms));
    report.foe_per_rollout.push_back(foe_sum / static_cast<double>(foe_terms));
  }
  mean_std(report.aoe_per_rollout, report.aoe_mean, report.aoe_std);
  mean_std(report.foe_per_rollout, report.foe_mean, report.foe_std);
  return report;
}

std::uint64_t rollout_seed(std::uint64_t seed, std::size_t rollout, std::size_t window) {
  return stream_seed(seed, {0xE7A1, rollout, window});
}

TrajectoryWindow model_input(const TrajectoryWindow& window, bool partial) {
  return partial ? window : only_fully_observed(window);
}

PredictionRollout predict_window(const ModelConfig& config, const ParamStore& params,
                                 const TrajectoryWindow& window, const EvalOptions& options,
                                 std::uint64_t seed) {
  const TrajectoryWindow input = model_input(window, options.partial);
  if (input.num_peds() == 0) {
    throw std::invalid_argument("predict_window: window has no pedestrian to predict");
  }
  check_params(config, params);
  const ParamBinding binding(params);
  const ModelBinding model(config, binding);
  RolloutOptions ro;
  ro.tau = options.tau;
  ro.mode = options.mode;
  ro.seed = seed;
  ro.pred_steps = input.steps() > kObsSteps ? input.steps() - kObsSteps : kPredSteps;
  return rollout(model, input.observed(), ro);
}

MetricReport evaluate_model(const ModelConfig& config, const ParamStore& params,
                            const std::vector<TrajectoryWindow>& windows,
                            const EvalOptions& options) {
  if (options.rollouts < 1) {
    throw std::invalid_argument("evaluate_model: at least one rollout is required");
  }
  check_params(config, params);
  std::vector<TrajectoryWindow> truth;
  for (const auto& w : windows) {
    TrajectoryWindow input = model_input(w, options.partial);
    if (input.num_peds() > 0) truth.push_back(std::move(input));
  }
  std::vector<std::vector<WindowPrediction>> predictions(options.rollouts);
  for (std::size_t r = 0; r < options.rollouts; ++r) {
    for (std::size_t w = 0; w < truth.size(); ++w) {
      EvalOptions as_given = options;
      as_given.partial = true;  // already filtered
      const PredictionRollout pr =
          predict_window(config, params, truth[w], as_given, rollout_seed(options.seed, r, w));
      predictions[r].push_back({pr.position_values(), pr.valid});
    }
  }
  MetricReport report = aoe_foe(predictions, truth);
  report.scene = options.scene;
  report.config_id = options.config_id;
  report.rollouts = options.rollouts;
  return report;
}

nlohmann::json report_to_json(const MetricReport& r) {
  return {{"scene", r.scene},
          {"config_id", r.config_id},
          {"rollouts", r.rollouts},
          {"windows", r.windows},
          {"fully_observed_pedestrians", r.pedestrians},
          {"partial_pedestrians", r.partial_pedestrians},
          {"status", r.empty ? "empty" : "ok"},
          {"aoe_mean", r.aoe_mean},
          {"aoe_std", r.aoe_std},
          {"foe_mean", r.foe_mean},
          {"foe_std", r.foe_std},
          {"aoe_per_rollout", r.aoe_per_rollout},
          {"foe_per_rollout", r.foe_per_rollout}};
}

void write_reports_csv(std::ostream& out, const std::vector<MetricReport>& reports) {
  out << "scene,config_id,rollouts,windows,fully_observed_pedestrians,status,"
         "aoe_mean,aoe_std,foe_mean,foe_std\n"
      << std::setprecision(10);
  for (const auto& r : reports) {
    out << r.scene << ',' << r.config_id << ',' << r.rollouts << ',' << r.windows << ','
        << r.pedestrians << ',' << (r.empty ? "empty" : "ok") << ',' << r.aoe_mean << ','
        << r.aoe_std << ',' << r.foe_mean << ',' << r.foe_std << '\n';
  }
}

nlohmann::json rollout_to_json(const PredictionRollout& rollout) {
  nlohmann::json steps = nlohmann::json::array();
  for (const Var& p : rollout.positions) {
    const Tensor& v = p.value();
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < v.dim(0); ++i) rows.push_back({v.at(i, 0), v.at(i, 1)});
    steps.push_back(rows);
  }
  nlohmann::json graphs = nlohmann::json::array();
  for (const GraphSample& g : rollout.graphs) {
    nlohmann::json adj = nlohmann::json::array();
    for (std::size_t i = 0; i < g.adjacency.rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (std::size_t j = 0; j < g.adjacency.cols(); ++j) row.push_back(g.adjacency.at(i, j));
      adj.push_back(row);
    }
    graphs.push_back({{"timestep", g.timestep}, {"node_mask", g.node_mask}, {"adjacency", adj}});
  }
  return {{"valid", rollout.valid}, {"positions", steps}, {"graphs", graphs}};
}

}  // namespace gst
