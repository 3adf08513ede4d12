#include "gst/edge_selector.hpp"

#include <stdexcept>

#include "gst/rng.hpp"

namespace gst {

SelectorParams SelectorParams::bind(const ParamBinding& params, std::size_t heads) {
  return {params["selector.qkv.w"],  params["selector.qkv.b"],  params["selector.mlp1.w"],
          params["selector.mlp1.b"], params["selector.mlp2.w"], params["selector.mlp2.b"],
          heads};
}

Var augment_edges(const InteractionGraph& graph) {
  if (!graph.edges) {
    throw std::invalid_argument("augment_edges: graph was built without edge features");
  }
  const std::size_t n = graph.size();
  const Var neighbour = matmul(constant(neighbour_selector(n)), graph.nodes);
  const Var target = matmul(constant(target_selector(n)), graph.nodes);
  const Var joined = concat({neighbour, target, *graph.edges}, 1);
  return mul_const(joined, edge_row_mask(graph.adjacency, joined.shape()[1]));
}

Var edge_attention(const Var& augmented, const Tensor& adjacency, const SelectorParams& params) {
  const std::size_t n = adjacency.rows();
  const std::size_t width = augmented.shape()[1];
  const Var qkv = affine(augmented, params.qkv_w, params.qkv_b);
  const Var q = slice_cols(qkv, 0, width);
  const Var k = slice_cols(qkv, width, 2 * width);
  const Var v = slice_cols(qkv, 2 * width, 3 * width);
  // group i = target i, keys = its N candidate edges, attendable iff a_ij
  const Var out = attention(q, k, v, n, params.heads, adjacency);
  return mul_const(out, edge_row_mask(adjacency, width));
}

Var edge_logits(const Var& per_head, const SelectorParams& params, std::size_t num_peds) {
  const std::size_t heads = params.heads;
  const std::size_t dh = per_head.shape()[1] / heads;
  const Var rows = reshape(per_head, {num_peds * num_peds * heads, dh});
  const Var hidden = relu(affine(rows, params.mlp1_w, params.mlp1_b));
  const Var logits = affine(hidden, params.mlp2_w, params.mlp2_b);  // row (i, j, k)
  const Var by_head = permute(reshape(logits, {num_peds, num_peds, heads}), {0, 2, 1});
  return reshape(by_head, {num_peds * heads, num_peds});
}

Tensor logit_mask(const Tensor& adjacency, std::size_t heads) {
  const std::size_t n = adjacency.rows();
  Tensor mask({n * heads, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < heads; ++k) {
      for (std::size_t j = 0; j < n; ++j) {
        mask[(i * heads + k) * n + j] = adjacency[i * n + j] != 0.0 ? 0.0 : kMasked;
      }
    }
  }
  return mask;
}

Tensor gumbel_noise(std::size_t num_peds, std::size_t heads, std::uint64_t seed,
                    std::uint64_t timestep) {
  Tensor g({num_peds * heads, num_peds});
  for (std::size_t i = 0; i < num_peds; ++i) {
    for (std::size_t k = 0; k < heads; ++k) {
      Rng rng = make_rng(seed, {timestep, i, k});
      for (std::size_t j = 0; j < num_peds; ++j) g[(i * heads + k) * num_peds + j] = gumbel(rng);
    }
  }
  return g;
}

SparseAdjacency sample_adjacency(const Var& logits, const Tensor& adjacency, std::size_t heads,
                                 double tau, SampleMode mode, const Tensor& noise) {
  if (!(tau > 0.0)) {
    throw std::invalid_argument("sample_adjacency: temperature must be positive, got " +
                                std::to_string(tau));
  }
  const std::size_t n = adjacency.rows();
  if (logits.shape() != Shape{n * heads, n}) {
    throw ShapeError("sample_adjacency: logits " + shape_str(logits.shape()) + ", expected " +
                     shape_str({n * heads, n}));
  }
  Var perturbed = logits;
  if (mode != SampleMode::deterministic) {
    if (noise.shape() != logits.shape()) {
      throw ShapeError("sample_adjacency: noise " + shape_str(noise.shape()) + " for logits " +
                       shape_str(logits.shape()));
    }
    perturbed = add(logits, constant(noise));
  }
  Var sample = softmax_rows(scale(perturbed, 1.0 / tau), logit_mask(adjacency, heads));
  if (mode == SampleMode::hard) {
    sample = straight_through_one_hot(sample);
  }
  SparseAdjacency out;
  out.per_head = sample;
  out.averaged = mean(reshape(sample, {n, heads, n}), 1);
  out.tau = tau;
  out.mode = mode;
  return out;
}

SparseAdjacency select_edges(const InteractionGraph& graph, const SelectorParams& params,
                             double tau, SampleMode mode, std::uint64_t seed) {
  const std::size_t n = graph.size();
  const Var per_head = edge_attention(augment_edges(graph), graph.adjacency, params);
  const Var logits = edge_logits(per_head, params, n);
  const Tensor noise = mode == SampleMode::deterministic
                           ? Tensor({n * params.heads, n})
                           : gumbel_noise(n, params.heads, seed,
                                          static_cast<std::uint64_t>(graph.timestep));
  return sample_adjacency(logits, graph.adjacency, params.heads, tau, mode, noise);
}

}  // namespace gst
