#include "doctest.h"

#include "gst/masked_lstm.hpp"
#include "gst/model_config.hpp"
#include "support.hpp"

using namespace gst;
using gst::testing::random_tensor;
using gst::testing::weighted_sum;

namespace {

ModelConfig small_model(bool sparsity, std::size_t heads = 2) {
  ModelConfig c;
  c.node_dim = 4;
  c.edge_dim = 8;
  c.hidden_dim = 4;
  c.encoder_layers = 1;
  c.encoder_heads = 2;
  c.feedforward_dim = 8;
  c.neighbors = heads;
  c.sparsity = sparsity;
  return c;
}

DecoderParams decoder_from(const ParamBinding& b) { return DecoderParams::bind(b); }

ParamStore lstm_store(std::size_t in, std::size_t hidden, std::uint64_t seed) {
  ParamStore s;
  s.set("lstm.wx", random_tensor({in, 4 * hidden}, seed));
  s.set("lstm.wh", random_tensor({hidden, 4 * hidden}, seed + 1));
  s.set("lstm.b", random_tensor({4 * hidden}, seed + 2));
  s.set("head.w", random_tensor({hidden, 2}, seed + 3));
  s.set("head.b", random_tensor({2}, seed + 4));
  return s;
}

ObservedWindow random_window(std::size_t n, std::size_t obs, std::uint64_t seed) {
  ObservedWindow w;
  Rng rng = make_rng(seed, {0x0B5});
  std::vector<double> x(n), y(n), vx(n), vy(n);
  std::uniform_real_distribution<double> pos(0.0, 8.0), vel(-0.5, 0.5);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = pos(rng);
    y[i] = pos(rng);
    vx[i] = vel(rng);
    vy[i] = vel(rng);
  }
  for (std::size_t t = 0; t < obs; ++t) {
    Tensor xy({n, 2});
    for (std::size_t i = 0; i < n; ++i) {
      xy.at(i, 0) = x[i] + static_cast<double>(t) * vx[i];
      xy.at(i, 1) = y[i] + static_cast<double>(t) * vy[i];
    }
    w.positions.push_back(xy);
    w.presence.push_back(Mask(n, true));
  }
  return w;
}

}  // namespace

TEST_CASE("all-invalid mask leaves the state untouched") {
  const ParamStore s = lstm_store(4, 3, 1);
  const ParamBinding b(s);
  const HiddenState st{constant(random_tensor({2, 3}, 5)), constant(random_tensor({2, 3}, 6))};
  const HiddenState next =
      lstm_step(constant(random_tensor({2, 4}, 7)), {false, false}, st, decoder_from(b));
  CHECK(next.h.value() == st.h.value());
  CHECK(next.c.value() == st.c.value());
}

TEST_CASE("zero weights give a zero hidden state") {
  ParamStore s;
  s.set("lstm.wx", Tensor({4, 12}));
  s.set("lstm.wh", Tensor({3, 12}));
  s.set("lstm.b", Tensor({12}));
  s.set("head.w", Tensor({3, 2}));
  s.set("head.b", Tensor({2}));
  const ParamBinding b(s);
  const HiddenState next = lstm_step(constant(random_tensor({2, 4}, 1)), {true, true},
                                     initial_state(2, 3), decoder_from(b));
  CHECK(next.h.value() == Tensor({2, 3}));
}

TEST_CASE("masked step equals an unmasked cell on the valid rows") {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng = make_rng(seed, {0x15});
    const std::size_t n = 1 + seed % 6;
    Mask m(n);
    std::bernoulli_distribution coin(0.5);
    for (std::size_t i = 0; i < n; ++i) m[i] = coin(rng);
    const ParamStore s = lstm_store(5, 4, seed);
    const ParamBinding b(s);
    const Tensor x = random_tensor({n, 5}, rng);
    const Tensor h = random_tensor({n, 4}, rng);
    const Tensor c = random_tensor({n, 4}, rng);
    const HiddenState out = lstm_step(constant(x), m, {constant(h), constant(c)}, decoder_from(b));

    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < n; ++i) {
      if (m[i]) rows.push_back(i);
    }
    if (!rows.empty()) {
      Tensor xs({rows.size(), 5}), hs({rows.size(), 4}), cs({rows.size(), 4});
      for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t k = 0; k < 5; ++k) xs.at(r, k) = x.at(rows[r], k);
        for (std::size_t k = 0; k < 4; ++k) {
          hs.at(r, k) = h.at(rows[r], k);
          cs.at(r, k) = c.at(rows[r], k);
        }
      }
      const HiddenState sub = lstm_cell(constant(xs), {constant(hs), constant(cs)}, decoder_from(b));
      for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t k = 0; k < 4; ++k) {
          CHECK(out.h.value().at(rows[r], k) == sub.h.value().at(r, k));
          CHECK(out.c.value().at(rows[r], k) == sub.c.value().at(r, k));
        }
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (m[i]) continue;
      for (std::size_t k = 0; k < 4; ++k) {
        CHECK(out.h.value().at(i, k) == h.at(i, k));
        CHECK(out.c.value().at(i, k) == c.at(i, k));
      }
    }
  }
}

TEST_CASE("masked step gradient matches finite differences") {
  const Mask m{true, false, true};
  const auto f = [&](const std::vector<Var>& v) {
    const DecoderParams p{v[3], v[4], v[5], v[0], v[0]};
    const HiddenState out = lstm_step(v[0], m, {v[1], v[2]}, p);
    return add(weighted_sum(out.h, 1), weighted_sum(out.c, 2));
  };
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng = make_rng(seed, {0x16});
    const auto r = gst::testing::check_gradients(
        f, {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng), random_tensor({3, 4}, rng),
            random_tensor({4, 16}, rng), random_tensor({4, 16}, rng), random_tensor({16}, rng)});
    CHECK(r.worst < 1e-4);
  }
}

TEST_CASE("rollout with a silent head stays at the last observed position") {
  const ModelConfig cfg = small_model(true);
  ParamStore store = init_params(cfg, 3);
  store.set("head.w", Tensor({cfg.hidden_dim, 2}));
  store.set("head.b", Tensor({2}));
  const ParamBinding b(store);
  const ObservedWindow w = random_window(3, 8, 1);
  const PredictionRollout r = rollout(ModelBinding(cfg, b), w, {});
  CHECK(r.positions.size() == 12);
  for (const Var& p : r.positions) CHECK(p.value() == w.positions.back());
  CHECK(r.graphs.size() == 18);
}

TEST_CASE("pedestrian gone before the last observed step is not predicted") {
  const ModelConfig cfg = small_model(true);
  const ParamStore store = init_params(cfg, 4);
  const ParamBinding b(store);
  ObservedWindow w = random_window(3, 8, 2);
  w.presence[7][1] = false;  // last seen at T_obs-1
  w.positions[7].at(1, 0) = w.positions[7].at(1, 1) = 0.0;
  const PredictionRollout r = rollout(ModelBinding(cfg, b), w, {});
  CHECK(r.valid == Mask{true, false, true});
  for (const Var& p : r.positions) {
    CHECK(p.value().at(1, 0) == 0.0);
    CHECK(p.value().at(1, 1) == 0.0);
  }
}

TEST_CASE("predicted positions telescope over the head outputs") {
  const ModelConfig cfg = small_model(true);
  const ParamStore store = init_params(cfg, 5);
  const ParamBinding b(store);
  const ObservedWindow w = random_window(4, 8, 3);
  RolloutOptions ro;
  ro.mode = SampleMode::soft;
  ro.seed = 12;
  const PredictionRollout r = rollout(ModelBinding(cfg, b), w, ro);
  const Tensor& hw = store.get("head.w");
  const Tensor& hb = store.get("head.b");
  Tensor acc = w.positions.back();
  for (std::size_t s = 0; s < r.positions.size(); ++s) {
    const Tensor& h = r.hidden[6 + s];  // state after graph T_obs + s
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t c = 0; c < 2; ++c) {
        double step = hb[c];
        for (std::size_t k = 0; k < cfg.hidden_dim; ++k) step += h.at(i, k) * hw.at(k, c);
        acc.at(i, c) += step;
      }
    }
    CHECK(max_abs_diff(r.positions[s].value(), acc) < 1e-12);
  }
}

TEST_CASE("absent pedestrian can be removed without changing anyone else") {
  for (bool sparsity : {false, true}) {
    const ModelConfig cfg = small_model(sparsity);
    const ParamStore store = init_params(cfg, 6);
    const ParamBinding b(store);
    const ModelBinding model(cfg, b);
    const ObservedWindow base = random_window(3, 8, 4);
    ObservedWindow with = base;
    for (std::size_t t = 0; t < 8; ++t) {
      Tensor xy({4, 2});
      for (std::size_t k = 0; k < 6; ++k) xy[k] = base.positions[t][k];
      xy[6] = 1e3 * static_cast<double>(t + 1);
      xy[7] = -77.0;
      with.positions[t] = xy;
      with.presence[t] = {true, true, true, false};
    }
    RolloutOptions ro;
    ro.mode = SampleMode::deterministic;
    const PredictionRollout a = rollout(model, base, ro);
    const PredictionRollout c = rollout(model, with, ro);
    for (std::size_t s = 0; s < a.positions.size(); ++s) {
      for (std::size_t k = 0; k < 6; ++k) CHECK(a.positions[s].value()[k] == c.positions[s].value()[k]);
    }
  }
}

TEST_CASE("rollout argument checks") {
  const ModelConfig cfg = small_model(false);
  const ParamStore store = init_params(cfg, 7);
  const ParamBinding b(store);
  const ModelBinding model(cfg, b);
  ObservedWindow one = random_window(2, 1, 5);
  CHECK_THROWS_AS(rollout(model, one, {}), std::invalid_argument);
  RolloutOptions zero;
  zero.pred_steps = 0;
  CHECK_THROWS_AS(rollout(model, random_window(2, 8, 5), zero), std::invalid_argument);
}

TEST_CASE("end-to-end rollout gradient matches finite differences") {
  for (bool sparsity : {false, true}) {
    const ModelConfig cfg = small_model(sparsity);
    const ParamStore store = init_params(cfg, 8);
    const ObservedWindow w = random_window(3, 3, 6);
    const auto f = [&](const ParamBinding& b) {
      RolloutOptions ro;
      ro.mode = SampleMode::deterministic;
      ro.tau = 0.5;
      ro.pred_steps = 2;
      const PredictionRollout r = rollout(ModelBinding(cfg, b), w, ro);
      return add(weighted_sum(r.positions[0], 1), weighted_sum(r.positions[1], 2));
    };
    const auto r = gst::testing::check_param_gradients(store, f);
    INFO("sparsity " << sparsity << " worst " << r.worst_name);
    CHECK(r.worst < 1e-3);
  }
}
