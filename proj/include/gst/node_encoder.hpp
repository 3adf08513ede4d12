#pragma once

#include <cstddef>
#include <vector>

#include "gst/autodiff.hpp"
#include "gst/interaction_graph.hpp"
#include "gst/model_config.hpp"

namespace gst {

struct EncoderLayerParams {
  Var qkv_w, qkv_b;
  Var out_w, out_b;
  Var ln1_g, ln1_b;
  Var ff1_w, ff1_b;
  Var ff2_w, ff2_b;
  Var ln2_g, ln2_b;
};

struct EncoderParams {
  std::vector<EncoderLayerParams> layers;
  std::size_t heads = 8;

  static EncoderParams bind(const ParamBinding& params, const ModelConfig& config);
};

/// Transformer encoder over the pedestrian set where attention is gated by a
/// float adjacency: per layer, softmax probabilities over valid keys are
/// multiplied by adjacency(i, j) and renormalised per row, followed by the
/// post-norm residual / feed-forward block. Rows of invalid nodes are zero
/// after every layer.
///
/// Throws std::invalid_argument if a valid row of `adjacency` does not sum to
/// 1 within 1e-6.
Var encode_nodes(const Var& nodes, const Var& adjacency, const Mask& mask,
                 const EncoderParams& params);

/// Row-normalised binary adjacency, used in place of a sampled graph when the
/// selector is disabled.
Tensor uniform_adjacency(const Mask& mask);

}  // namespace gst
