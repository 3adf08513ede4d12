#include "gst/node_encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace gst {

EncoderParams EncoderParams::bind(const ParamBinding& params, const ModelConfig& config) {
  EncoderParams out;
  out.heads = config.encoder_heads;
  for (std::size_t l = 0; l < config.encoder_layers; ++l) {
    const std::string p = "encoder." + std::to_string(l) + ".";
    out.layers.push_back({params[p + "qkv.w"], params[p + "qkv.b"], params[p + "out.w"],
                          params[p + "out.b"], params[p + "ln1.g"], params[p + "ln1.b"],
                          params[p + "ff1.w"], params[p + "ff1.b"], params[p + "ff2.w"],
                          params[p + "ff2.b"], params[p + "ln2.g"], params[p + "ln2.b"]});
  }
  return out;
}

namespace {

void check_row_stochastic(const Tensor& adjacency, const Mask& mask) {
  const std::size_t n = mask.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += adjacency[i * n + j];
    if (std::abs(total - 1.0) > 1e-6) {
      throw std::invalid_argument("encode_nodes: adjacency row " + std::to_string(i) +
                                  " sums to " + std::to_string(total) + ", expected 1");
    }
  }
}

}  // namespace

Var encode_nodes(const Var& nodes, const Var& adjacency, const Mask& mask,
                 const EncoderParams& params) {
  const std::size_t n = mask.size();
  if (nodes.value().rank() != 2 || nodes.shape()[0] != n) {
    throw ShapeError("encode_nodes: nodes " + shape_str(nodes.shape()) + " for " +
                     std::to_string(n) + " pedestrians");
  }
  if (adjacency.shape() != Shape{n, n}) {
    throw ShapeError("encode_nodes: adjacency " + shape_str(adjacency.shape()) + " for " +
                     std::to_string(n) + " pedestrians");
  }
  check_row_stochastic(adjacency.value(), mask);

  const std::size_t width = nodes.shape()[1];
  const Tensor keep = row_mask(mask, width);
  Tensor key_mask({1, n});
  for (std::size_t j = 0; j < n; ++j) key_mask[j] = mask[j] ? 1.0 : 0.0;

  Var x = nodes;
  for (const auto& layer : params.layers) {
    const Var qkv = affine(x, layer.qkv_w, layer.qkv_b);
    const Var attended = attention(slice_cols(qkv, 0, width), slice_cols(qkv, width, 2 * width),
                                   slice_cols(qkv, 2 * width, 3 * width), 1, params.heads,
                                   key_mask, &adjacency);
    const Var mixed = affine(attended, layer.out_w, layer.out_b);
    const Var h1 = layer_norm(add(x, mixed), layer.ln1_g, layer.ln1_b);
    const Var ff = affine(relu(affine(h1, layer.ff1_w, layer.ff1_b)), layer.ff2_w, layer.ff2_b);
    const Var h2 = layer_norm(add(h1, ff), layer.ln2_g, layer.ln2_b);
    x = mul_const(h2, keep);
  }
  return x;
}

Tensor uniform_adjacency(const Mask& mask) {
  const std::size_t n = mask.size();
  const double valid = static_cast<double>(count(mask));
  Tensor a({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    for (std::size_t j = 0; j < n; ++j) a[i * n + j] = mask[j] ? 1.0 / valid : 0.0;
  }
  return a;
}

}  // namespace gst
