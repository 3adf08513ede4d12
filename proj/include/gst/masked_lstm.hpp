#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "gst/autodiff.hpp"
#include "gst/edge_selector.hpp"
#include "gst/interaction_graph.hpp"
#include "gst/model_config.hpp"
#include "gst/node_encoder.hpp"

namespace gst {

struct HiddenState {
  Var h;  // [N, hidden]
  Var c;  // [N, hidden]
};

struct DecoderParams {
  Var wx, wh, b;         // LSTM gates, order i, f, g, o
  Var head_w, head_b;    // hidden -> 2-D displacement

  static DecoderParams bind(const ParamBinding& params);
};

HiddenState initial_state(std::size_t num_peds, std::size_t hidden_dim);

/// Plain LSTM cell applied to every row.
HiddenState lstm_cell(const Var& input, const HiddenState& state, const DecoderParams& params);

/// Mask-gated update: rows with mask false keep h and c bit-for-bit, rows
/// with mask true take the cell output.
HiddenState lstm_step(const Var& input, const Mask& mask, const HiddenState& state,
                      const DecoderParams& params);

/// Observation part of a window: one [N, 2] position tensor and one presence
/// mask per observed step.
struct ObservedWindow {
  std::vector<Tensor> positions;
  std::vector<Mask> presence;

  std::size_t steps() const { return positions.size(); }
  std::size_t num_peds() const { return presence.empty() ? 0 : presence.front().size(); }
};

struct RolloutOptions {
  double tau = 0.03;
  SampleMode mode = SampleMode::soft;
  std::uint64_t seed = 0;
  std::size_t pred_steps = 12;
};

struct GraphSample {
  int timestep = 0;    // 1-based step t of the graph G^t
  Tensor adjacency;    // [N, N] weighted adjacency fed to the encoder
  Mask node_mask;
};

struct PredictionRollout {
  std::vector<Var> positions;        // pred_steps entries of [N, 2]
  Mask valid;                        // predicted pedestrians (present at the last observed step)
  std::vector<GraphSample> graphs;   // every graph built, observation and prediction
  std::vector<Tensor> hidden;        // h after each LSTM step

  // Positions as plain values, [pred_steps, N, 2].
  Tensor position_values() const;
};

/// Bound model parameters for one forward pass.
struct ModelBinding {
  ModelConfig config;
  EmbeddingParams embedding;
  std::optional<SelectorParams> selector;
  EncoderParams encoder;
  DecoderParams decoder;

  ModelBinding(const ModelConfig& config, const ParamBinding& params);
};

/// Encoder output for one interaction graph, together with the adjacency used.
struct EncodedStep {
  Var encoded;
  Var adjacency;
};

EncodedStep encode_step(const ModelBinding& model, const InteractionGraph& graph, double tau,
                        SampleMode mode, std::uint64_t seed);

/// Warm-up over the observed steps, then recursive prediction that rebuilds
/// each interaction graph from the model's own predicted positions.
PredictionRollout rollout(const ModelBinding& model, const ObservedWindow& window,
                          const RolloutOptions& options);

}  // namespace gst
