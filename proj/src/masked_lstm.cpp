#include "gst/masked_lstm.hpp"

#include <stdexcept>

namespace gst {

DecoderParams DecoderParams::bind(const ParamBinding& params) {
  return {params["lstm.wx"], params["lstm.wh"], params["lstm.b"], params["head.w"],
          params["head.b"]};
}

HiddenState initial_state(std::size_t num_peds, std::size_t hidden_dim) {
  return {constant(Tensor({num_peds, hidden_dim})), constant(Tensor({num_peds, hidden_dim}))};
}

HiddenState lstm_cell(const Var& input, const HiddenState& state, const DecoderParams& params) {
  const std::size_t h = state.h.shape()[1];
  const Var gates =
      add_bias(add(matmul(input, params.wx), matmul(state.h, params.wh)), params.b);
  const Var in_gate = sigmoid(slice_cols(gates, 0, h));
  const Var forget_gate = sigmoid(slice_cols(gates, h, 2 * h));
  const Var candidate = tanh(slice_cols(gates, 2 * h, 3 * h));
  const Var out_gate = sigmoid(slice_cols(gates, 3 * h, 4 * h));
  const Var c = add(mul(forget_gate, state.c), mul(in_gate, candidate));
  return {mul(out_gate, tanh(c)), c};
}

HiddenState lstm_step(const Var& input, const Mask& mask, const HiddenState& state,
                      const DecoderParams& params) {
  const std::size_t n = state.h.shape()[0];
  if (mask.size() != n || input.shape()[0] != n) {
    throw ShapeError("lstm_step: " + std::to_string(mask.size()) + " mask rows, input " +
                     shape_str(input.shape()) + ", state " + shape_str(state.h.shape()));
  }
  if (count(mask) == 0) {
    return state;
  }
  const HiddenState next = lstm_cell(input, state, params);
  return {select_rows(mask, next.h, state.h), select_rows(mask, next.c, state.c)};
}

Tensor PredictionRollout::position_values() const {
  if (positions.empty()) {
    return {};
  }
  const std::size_t n = positions.front().shape()[0];
  Tensor out({positions.size(), n, 2});
  for (std::size_t s = 0; s < positions.size(); ++s) {
    const auto src = positions[s].value().data();
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(s * n * 2));
  }
  return out;
}

ModelBinding::ModelBinding(const ModelConfig& cfg, const ParamBinding& params)
    : config(cfg),
      embedding(EmbeddingParams::bind(params, cfg.sparsity)),
      encoder(EncoderParams::bind(params, cfg)),
      decoder(DecoderParams::bind(params)) {
  if (cfg.sparsity) {
    selector = SelectorParams::bind(params, cfg.neighbors);
  }
}

EncodedStep encode_step(const ModelBinding& model, const InteractionGraph& graph, double tau,
                        SampleMode mode, std::uint64_t seed) {
  Var adjacency = model.selector
                      ? select_edges(graph, *model.selector, tau, mode, seed).averaged
                      : constant(uniform_adjacency(graph.node_mask));
  Var encoded = encode_nodes(graph.nodes, adjacency, graph.node_mask, model.encoder);
  return {std::move(encoded), std::move(adjacency)};
}

namespace {

Var advance(const Var& position, const Mask& valid, const HiddenState& state,
            const DecoderParams& params) {
  const Var step = affine(state.h, params.head_w, params.head_b);
  return select_rows(valid, add(position, step), position);
}

}  // namespace

PredictionRollout rollout(const ModelBinding& model, const ObservedWindow& window,
                          const RolloutOptions& options) {
  const std::size_t obs = window.steps();
  if (obs < 2 || window.presence.size() != obs) {
    throw std::invalid_argument("rollout: need at least two observed steps with presence masks");
  }
  if (options.pred_steps < 1) {
    throw std::invalid_argument("rollout: prediction horizon must be at least one step");
  }
  const std::size_t n = window.num_peds();
  for (std::size_t t = 0; t < obs; ++t) {
    if (window.positions[t].shape() != Shape{n, 2} || window.presence[t].size() != n) {
      throw ShapeError("rollout: observed step " + std::to_string(t + 1) + " has positions " +
                       shape_str(window.positions[t].shape()) + " for " + std::to_string(n) +
                       " pedestrians");
    }
  }

  PredictionRollout out;
  HiddenState state = initial_state(n, model.config.hidden_dim);

  auto process = [&](const Positions& prev, const Positions& curr, int timestep) {
    const InteractionGraph graph = build_graph(prev, curr, model.embedding, timestep);
    const EncodedStep encoded =
        encode_step(model, graph, options.tau, options.mode, options.seed);
    state = lstm_step(encoded.encoded, graph.node_mask, state, model.decoder);
    out.graphs.push_back({timestep, encoded.adjacency.value(), graph.node_mask});
    out.hidden.push_back(state.h.value());
  };

  // graphs G^2 .. G^T_obs from recorded positions
  for (std::size_t t = 1; t < obs; ++t) {
    process({constant(window.positions[t - 1]), window.presence[t - 1]},
            {constant(window.positions[t]), window.presence[t]}, static_cast<int>(t + 1));
  }

  out.valid = masks_for_prediction(window.presence);
  Var previous = constant(window.positions[obs - 1]);
  Var current = advance(previous, out.valid, state, model.decoder);
  out.positions.push_back(current);

  for (std::size_t s = 1; s < options.pred_steps; ++s) {
    process({previous, out.valid}, {current, out.valid}, static_cast<int>(obs + s));
    Var next = advance(current, out.valid, state, model.decoder);
    previous = current;
    current = next;
    out.positions.push_back(current);
  }
  return out;
}

}  // namespace gst
