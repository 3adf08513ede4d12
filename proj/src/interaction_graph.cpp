#include "gst/interaction_graph.hpp"

#include <algorithm>
#include <stdexcept>

namespace gst {

EmbeddingParams EmbeddingParams::bind(const ParamBinding& params, bool with_edges) {
  EmbeddingParams p{params["embed.node.w"], params["embed.node.b"], std::nullopt, std::nullopt};
  if (with_edges) {
    p.edge_w = params["embed.edge.w"];
    p.edge_b = params["embed.edge.b"];
  }
  return p;
}

Mask and_masks(const Mask& a, const Mask& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("mask size mismatch");
  }
  Mask out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] && b[i];
  return out;
}

std::size_t count(const Mask& m) { return static_cast<std::size_t>(std::count(m.begin(), m.end(), true)); }

Tensor row_mask(const Mask& m, std::size_t width) {
  Tensor t({m.size(), width});
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i]) std::fill_n(t.data().begin() + static_cast<std::ptrdiff_t>(i * width), width, 1.0);
  }
  return t;
}

Tensor adjacency_from_mask(const Mask& m) {
  const std::size_t n = m.size();
  Tensor a({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) a[i * n + j] = (m[i] && m[j]) ? 1.0 : 0.0;
  }
  return a;
}

Tensor edge_row_mask(const Tensor& adjacency, std::size_t width) {
  const std::size_t rows = adjacency.size();
  Tensor t({rows, width});
  for (std::size_t r = 0; r < rows; ++r) {
    if (adjacency[r] != 0.0) {
      std::fill_n(t.data().begin() + static_cast<std::ptrdiff_t>(r * width), width, 1.0);
    }
  }
  return t;
}

Tensor neighbour_selector(std::size_t n) {
  Tensor s({n * n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) s[(i * n + j) * n + j] = 1.0;
  }
  return s;
}

Tensor target_selector(std::size_t n) {
  Tensor s({n * n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) s[(i * n + j) * n + i] = 1.0;
  }
  return s;
}

InteractionGraph build_graph(const Positions& prev, const Positions& curr,
                             const EmbeddingParams& params, int timestep) {
  const std::size_t n = curr.size();
  if (prev.size() != n || prev.xy.shape() != Shape{n, 2} || curr.xy.shape() != Shape{n, 2}) {
    throw std::invalid_argument("build_graph: pedestrian count mismatch between steps (" +
                                std::to_string(prev.size()) + " vs " + std::to_string(n) + ")");
  }
  InteractionGraph g;
  g.timestep = timestep;
  g.node_mask = and_masks(prev.valid, curr.valid);
  g.adjacency = adjacency_from_mask(g.node_mask);

  // Invalid rows are zeroed before any arithmetic so filler values never
  // reach an activation.
  const Tensor xy_mask = row_mask(g.node_mask, 2);
  const Var displacement = mul_const(sub(curr.xy, prev.xy), xy_mask);
  const std::size_t dv = params.node_w.shape()[1];
  g.nodes = mul_const(affine(displacement, params.node_w, params.node_b), row_mask(g.node_mask, dv));

  if (params.edge_w) {
    const Var curr_valid = mul_const(curr.xy, xy_mask);
    const Var selector =
        constant([&] {
          Tensor s = neighbour_selector(n);
          const Tensor t = target_selector(n);
          for (std::size_t i = 0; i < s.size(); ++i) s[i] -= t[i];
          return s;
        }());
    const Var relative = mul_const(matmul(selector, curr_valid), edge_row_mask(g.adjacency, 2));
    const std::size_t de = params.edge_w->shape()[1];
    g.edges = mul_const(affine(relative, *params.edge_w, *params.edge_b),
                        edge_row_mask(g.adjacency, de));
  }
  return g;
}

Mask masks_for_prediction(const std::vector<Mask>& observed_presence) {
  if (observed_presence.size() < 2) {
    throw std::invalid_argument("masks_for_prediction: need at least two observed steps");
  }
  return observed_presence.back();
}

}  // namespace gst
