#pragma once

#include <cstddef>
#include <cstdint>

#include "gst/autodiff.hpp"
#include "gst/interaction_graph.hpp"
#include "gst/model_config.hpp"

namespace gst {

struct SelectorParams {
  Var qkv_w, qkv_b;    // [d_aug, 3*d_aug], [3*d_aug]
  Var mlp1_w, mlp1_b;  // [d_aug/n, d_aug/n]
  Var mlp2_w, mlp2_b;  // [d_aug/n, 1]
  std::size_t heads = 1;

  static SelectorParams bind(const ParamBinding& params, std::size_t heads);
};

/// Row i*N+j is [v_j | v_i | e_ij]; rows of invalid edges are zero.
Var augment_edges(const InteractionGraph& graph);

/// Edge-level multi-head self-attention among the N candidate edges of each
/// target. Returns [N*N, d_aug]: row i*N+j holds the per-head outputs for edge
/// (i, j), head k in columns [k*d_aug/n, (k+1)*d_aug/n). No output projection;
/// invalid edges produce zero rows.
Var edge_attention(const Var& augmented, const Tensor& adjacency, const SelectorParams& params);

/// Log-probabilities [N*n, N]; row i*n+k is the categorical over neighbours
/// of target i for head k. Invalid neighbours are not masked here; see
/// logit_mask().
Var edge_logits(const Var& per_head, const SelectorParams& params, std::size_t num_peds);

/// Additive mask [N*n, N] matching edge_logits: 0 where adjacency(i, j), else kMasked.
Tensor logit_mask(const Tensor& adjacency, std::size_t heads);

/// i.i.d. Gumbel(0,1) draws [N*n, N]; row (i, k) is drawn from its own stream
/// addressed by (seed, timestep, i, k).
Tensor gumbel_noise(std::size_t num_peds, std::size_t heads, std::uint64_t seed,
                    std::uint64_t timestep);

struct SparseAdjacency {
  Var per_head;  // [N*n, N], row i*n+k
  Var averaged;  // [N, N], mean over heads
  double tau = 1.0;
  SampleMode mode = SampleMode::soft;
};

/// Concrete relaxation softmax((alpha + g)/tau) per row with invalid entries
/// dropped; hard mode replaces each row by its one-hot argmax with a
/// straight-through gradient. `noise` is ignored in deterministic mode.
SparseAdjacency sample_adjacency(const Var& logits, const Tensor& adjacency, std::size_t heads,
                                 double tau, SampleMode mode, const Tensor& noise);

/// Full selector: augment -> edge attention -> logits -> sample.
SparseAdjacency select_edges(const InteractionGraph& graph, const SelectorParams& params,
                             double tau, SampleMode mode, std::uint64_t seed);

}  // namespace gst
