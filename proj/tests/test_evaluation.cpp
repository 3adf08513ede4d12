#include "doctest.h"

#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "gst/errors.hpp"
#include "gst/evaluation.hpp"
#include "gst/model_config.hpp"
#include "support.hpp"

using namespace gst;
using gst::testing::random_tensor;

namespace {

TrajectoryWindow full_window(const Tensor& positions) {
  const std::size_t steps = positions.shape()[0];
  const std::size_t n = positions.shape()[1];
  TrajectoryWindow w;
  w.positions = positions;
  w.presence.assign(steps, Mask(n, true));
  w.fully_observed.assign(n, true);
  for (std::size_t i = 0; i < n; ++i) w.pedestrian_ids.push_back(static_cast<long>(i));
  return w;
}

// Ground-truth future of `w` shifted by `offset` in x for every pedestrian.
WindowPrediction shifted(const TrajectoryWindow& w, const std::vector<double>& offset) {
  const std::size_t n = w.num_peds();
  WindowPrediction p{Tensor({kPredSteps, n, 2}), Mask(n, true)};
  for (std::size_t s = 0; s < kPredSteps; ++s) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t q = ((kObsSteps + s) * n + i) * 2;
      p.positions[(s * n + i) * 2] = w.positions[q] + offset[i];
      p.positions[(s * n + i) * 2 + 1] = w.positions[q + 1];
    }
  }
  return p;
}

ModelConfig small_model(bool sparsity) {
  ModelConfig c;
  c.node_dim = 4;
  c.edge_dim = 8;
  c.hidden_dim = 4;
  c.encoder_layers = 1;
  c.encoder_heads = 2;
  c.feedforward_dim = 8;
  c.neighbors = 2;
  c.sparsity = sparsity;
  return c;
}

}  // namespace

TEST_CASE("offset error") {
  CHECK(offset_error({1.5, -2.0}, {1.5, -2.0}) == 0.0);
  CHECK(offset_error({0.0, 0.0}, {3.0, 4.0}) == 5.0);

  TrajectoryWindow w = full_window(random_tensor({kWindowSteps, 2, 2}, 1));
  w.presence[15][1] = false;
  w.fully_observed[1] = false;
  const WindowPrediction p = shifted(w, {0.0, 0.0});
  CHECK(offset_error(p.positions, p.valid, w, 3, 0) == 0.0);
  CHECK_THROWS_AS(offset_error(p.positions, p.valid, w, 7, 1), std::invalid_argument);
  CHECK_THROWS_AS(offset_error(p.positions, {true, false}, w, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(offset_error(p.positions, p.valid, w, 12, 0), std::invalid_argument);
}

TEST_CASE("constant offsets average exactly") {
  const TrajectoryWindow w = full_window(random_tensor({kWindowSteps, 2, 2}, 2));
  const MetricReport one = aoe_foe({{shifted(w, {0.5, 0.5})}}, {w});
  CHECK(one.aoe_mean == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(one.foe_mean == doctest::Approx(0.5).epsilon(1e-12));

  const MetricReport two = aoe_foe({{shifted(w, {1.0, -2.0})}}, {w});
  CHECK(two.aoe_mean == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(two.foe_mean == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(two.pedestrians == 2);
  CHECK_FALSE(two.empty);
}

TEST_CASE("identical rollouts have zero spread") {
  const TrajectoryWindow w = full_window(random_tensor({kWindowSteps, 3, 2}, 3));
  const WindowPrediction p = shifted(w, {0.3, 0.1, 0.7});
  const MetricReport r = aoe_foe(std::vector<std::vector<WindowPrediction>>(20, {p}), {w});
  CHECK(r.rollouts == 20);
  CHECK(r.aoe_std == 0.0);
  CHECK(r.foe_std == 0.0);
}

TEST_CASE("partial pedestrians are not scored") {
  TrajectoryWindow w = full_window(random_tensor({kWindowSteps, 2, 2}, 4));
  for (std::size_t t = 0; t < 3; ++t) w.presence[t][1] = false;
  w.fully_observed[1] = false;
  const MetricReport r = aoe_foe({{shifted(w, {0.25, 9.0})}}, {w});
  CHECK(r.aoe_mean == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(r.pedestrians == 1);
  CHECK(r.partial_pedestrians == 1);

  w.fully_observed[0] = false;
  w.presence[0][0] = false;
  const MetricReport e = aoe_foe({{shifted(w, {0.0, 0.0})}}, {w});
  CHECK(e.empty);
  CHECK(report_to_json(e).at("status") == "empty");
  CHECK(report_to_json(r).at("status") == "ok");
}

TEST_CASE("aggregation matches a scalar loop") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng = make_rng(seed, {0xA0E});
    const std::size_t windows = 1 + seed % 4;
    const std::size_t rollouts = 1 + seed % 5;
    std::vector<TrajectoryWindow> truth;
    for (std::size_t k = 0; k < windows; ++k) {
      const std::size_t n = 1 + (seed + k) % 4;
      TrajectoryWindow w = full_window(random_tensor({kWindowSteps, n, 2}, rng));
      if (n > 1) {
        for (std::size_t t = 10; t < kWindowSteps; ++t) w.presence[t][n - 1] = false;
        w.fully_observed[n - 1] = false;
      }
      truth.push_back(w);
    }
    std::vector<std::vector<WindowPrediction>> preds(rollouts);
    for (auto& r : preds) {
      for (const auto& w : truth) {
        r.push_back({random_tensor({kPredSteps, w.num_peds(), 2}, rng), Mask(w.num_peds(), true)});
      }
    }

    std::vector<double> aoe, foe;
    for (const auto& r : preds) {
      double a = 0.0, f = 0.0;
      int na = 0, nf = 0;
      double lo = 1e300, hi = 0.0;
      for (std::size_t k = 0; k < windows; ++k) {
        const std::size_t n = truth[k].num_peds();
        for (std::size_t i = 0; i < n; ++i) {
          if (!truth[k].fully_observed[i]) continue;
          for (std::size_t s = 0; s < kPredSteps; ++s) {
            const double dx = r[k].positions[(s * n + i) * 2] -
                              truth[k].positions[((kObsSteps + s) * n + i) * 2];
            const double dy = r[k].positions[(s * n + i) * 2 + 1] -
                              truth[k].positions[((kObsSteps + s) * n + i) * 2 + 1];
            const double e = std::sqrt(dx * dx + dy * dy);
            a += e;
            ++na;
            lo = std::min(lo, e);
            hi = std::max(hi, e);
            if (s + 1 == kPredSteps) {
              f += e;
              ++nf;
            }
          }
        }
      }
      aoe.push_back(a / na);
      foe.push_back(f / nf);
      CHECK(aoe.back() >= lo);
      CHECK(aoe.back() <= hi);
    }
    double am = 0.0, fm = 0.0;
    for (std::size_t k = 0; k < rollouts; ++k) {
      am += aoe[k] / static_cast<double>(rollouts);
      fm += foe[k] / static_cast<double>(rollouts);
    }
    double av = 0.0;
    for (double x : aoe) av += (x - am) * (x - am) / static_cast<double>(rollouts);

    const MetricReport rep = aoe_foe(preds, truth);
    for (std::size_t k = 0; k < rollouts; ++k) {
      CHECK(std::abs(rep.aoe_per_rollout[k] - aoe[k]) <= 1e-12);
      CHECK(std::abs(rep.foe_per_rollout[k] - foe[k]) <= 1e-12);
    }
    CHECK(std::abs(rep.aoe_mean - am) <= 1e-12);
    CHECK(std::abs(rep.foe_mean - fm) <= 1e-12);
    CHECK(std::abs(rep.aoe_std - std::sqrt(av)) <= 1e-12);
  }
}

TEST_CASE("metrics are invariant under a joint rotation") {
  const TrajectoryWindow w = full_window(random_tensor({kWindowSteps, 3, 2}, 6));
  WindowPrediction p{random_tensor({kPredSteps, 3, 2}, 7), Mask(3, true)};
  const MetricReport base = aoe_foe({{p}}, {w});
  for (double angle : {0.3, std::numbers::pi / 2, 2.0, 5.9}) {
    const std::array<double, 2> origin{1.5, -0.5};
    const TrajectoryWindow rw = rotate_augment(w, angle, origin);
    TrajectoryWindow as_window = full_window(p.positions);
    as_window = rotate_augment(as_window, angle, origin);
    const MetricReport rot = aoe_foe({{{as_window.positions, p.valid}}}, {rw});
    CHECK(rot.aoe_mean == doctest::Approx(base.aoe_mean).epsilon(1e-12));
    CHECK(rot.foe_mean == doctest::Approx(base.foe_mean).epsilon(1e-12));
  }
}

TEST_CASE("argument checks") {
  const TrajectoryWindow w = full_window(random_tensor({kWindowSteps, 1, 2}, 8));
  CHECK_THROWS_AS(aoe_foe({}, {w}), std::invalid_argument);
  CHECK_THROWS_AS(aoe_foe({{}}, {w}), std::invalid_argument);
}

TEST_CASE("model evaluation") {
  const auto windows = constant_velocity_windows({.windows = 3, .pedestrians = 3}, 9);
  SUBCASE("deterministic mode gives identical rollouts") {
    const ModelConfig cfg = small_model(true);
    const ParamStore params = init_params(cfg, 1);
    EvalOptions o;
    o.rollouts = 4;
    o.mode = SampleMode::deterministic;
    o.scene = "synthetic";
    o.config_id = 6;
    const MetricReport r = evaluate_model(cfg, params, windows, o);
    CHECK(r.aoe_std == 0.0);
    CHECK(r.foe_std == 0.0);
    CHECK(r.pedestrians == 9);
    CHECK(r.aoe_mean > 0.0);
    std::ostringstream csv;
    write_reports_csv(csv, {r});
    CHECK(csv.str().find("\nsynthetic,6,4,3,9,ok,") != std::string::npos);
  }
  SUBCASE("soft sampling varies across rollout seeds") {
    const ModelConfig cfg = small_model(true);
    const ParamStore params = init_params(cfg, 2);
    EvalOptions o;
    o.rollouts = 5;
    o.tau = 0.5;
    const MetricReport r = evaluate_model(cfg, params, windows, o);
    std::set<double> distinct(r.aoe_per_rollout.begin(), r.aoe_per_rollout.end());
    CHECK(distinct.size() == 5);
    CHECK(evaluate_model(cfg, params, windows, o).aoe_per_rollout == r.aoe_per_rollout);
  }
  SUBCASE("parameters must match the configuration") {
    ParamStore params = init_params(small_model(false), 3);
    CHECK_THROWS_AS(evaluate_model(small_model(true), params, windows, {}), ConfigMismatch);
  }
  SUBCASE("rollout export") {
    const ModelConfig cfg = small_model(true);
    const ParamStore params = init_params(cfg, 4);
    const PredictionRollout pr = predict_window(cfg, params, windows[0], {}, 5);
    const nlohmann::json j = rollout_to_json(pr);
    CHECK(j.at("positions").size() == kPredSteps);
    CHECK(j.at("graphs").size() == kWindowSteps - 2);
    CHECK(j.at("graphs")[0].at("adjacency").size() == 3);
  }
}
