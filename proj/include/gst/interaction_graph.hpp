#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "gst/autodiff.hpp"
#include "gst/params.hpp"

namespace gst {

using Mask = std::vector<bool>;

/// Pedestrian positions at one time step. Invalid rows hold a filler value
/// that downstream math never reads.
struct Positions {
  Var xy;      // [N, 2], metres
  Mask valid;  // N
  std::size_t size() const { return valid.size(); }
};

/// Linear embeddings of displacements (nodes) and relative positions (edges).
/// The edge map is absent when the model has no edge selector.
struct EmbeddingParams {
  Var node_w, node_b;
  std::optional<Var> edge_w, edge_b;

  static EmbeddingParams bind(const ParamBinding& params, bool with_edges);
};

struct InteractionGraph {
  Var nodes;                 // [N, d_v]
  std::optional<Var> edges;  // [N*N, d_e], row i*N+j is the edge target i -> neighbour j
  Mask node_mask;            // N
  Tensor adjacency;          // [N, N], 0/1
  int timestep = 0;

  std::size_t size() const { return node_mask.size(); }
};

InteractionGraph build_graph(const Positions& prev, const Positions& curr,
                             const EmbeddingParams& params, int timestep = 0);

/// Node mask used at every prediction step: a pedestrian keeps being predicted
/// iff it is present at the last observed step. `observed_presence` holds one
/// mask per observed step (at least two).
Mask masks_for_prediction(const std::vector<Mask>& observed_presence);

// ---- mask helpers shared by the model modules ----

Mask and_masks(const Mask& a, const Mask& b);
std::size_t count(const Mask& m);
// [N, width] with row i all 1 when m[i], else 0.
Tensor row_mask(const Mask& m, std::size_t width);
// [N, N] outer AND of the mask with itself.
Tensor adjacency_from_mask(const Mask& m);
// [N*N, width] with row i*N+j all adjacency(i, j).
Tensor edge_row_mask(const Tensor& adjacency, std::size_t width);
// [N*N, N] selection matrices picking the neighbour j / the target i of row i*N+j.
Tensor neighbour_selector(std::size_t n);
Tensor target_selector(std::size_t n);

}  // namespace gst
