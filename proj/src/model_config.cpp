#include "gst/model_config.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

#include "gst/errors.hpp"
#include "gst/rng.hpp"

namespace gst {

std::string to_string(SampleMode mode) {
  switch (mode) {
    case SampleMode::soft:
      return "soft";
    case SampleMode::hard:
      return "hard";
    case SampleMode::deterministic:
      return "deterministic";
  }
  return "soft";
}

SampleMode parse_sample_mode(const std::string& text) {
  if (text == "soft") return SampleMode::soft;
  if (text == "hard") return SampleMode::hard;
  if (text == "deterministic") return SampleMode::deterministic;
  throw std::invalid_argument("unknown sampling mode '" + text + "'");
}

void ModelConfig::validate() const {
  if (node_dim == 0 || edge_dim == 0 || hidden_dim == 0 || encoder_layers == 0 ||
      encoder_heads == 0 || feedforward_dim == 0 || neighbors == 0) {
    throw std::invalid_argument("model config: dimensions must be positive");
  }
  if (node_dim % encoder_heads != 0) {
    throw std::invalid_argument("model config: node_dim not divisible by encoder_heads");
  }
  if (sparsity && augmented_dim() % neighbors != 0) {
    throw std::invalid_argument("model config: augmented edge width " +
                                std::to_string(augmented_dim()) + " not divisible by n=" +
                                std::to_string(neighbors));
  }
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"node_dim", c.node_dim},
       {"edge_dim", c.edge_dim},
       {"hidden_dim", c.hidden_dim},
       {"encoder_layers", c.encoder_layers},
       {"encoder_heads", c.encoder_heads},
       {"feedforward_dim", c.feedforward_dim},
       {"neighbors", c.neighbors},
       {"sparsity", c.sparsity}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.node_dim = j.value("node_dim", d.node_dim);
  c.edge_dim = j.value("edge_dim", d.edge_dim);
  c.hidden_dim = j.value("hidden_dim", d.hidden_dim);
  c.encoder_layers = j.value("encoder_layers", d.encoder_layers);
  c.encoder_heads = j.value("encoder_heads", d.encoder_heads);
  c.feedforward_dim = j.value("feedforward_dim", d.feedforward_dim);
  c.neighbors = j.value("neighbors", d.neighbors);
  c.sparsity = j.value("sparsity", d.sparsity);
}

const std::vector<Variant>& variants() {
  static const std::vector<Variant> table = {
      {1, false, false, 0}, {2, false, true, 16}, {3, false, true, 4}, {4, false, true, 1},
      {5, true, false, 0},  {6, true, true, 16},  {7, true, true, 4},  {8, true, true, 1},
  };
  return table;
}

std::optional<Variant> variant_by_id(int id) {
  for (const auto& v : variants()) {
    if (v.id == id) return v;
  }
  return std::nullopt;
}

int variant_id(bool partial, bool sparsity, std::size_t neighbors) {
  for (const auto& v : variants()) {
    if (v.partial == partial && v.sparsity == sparsity && (!sparsity || v.neighbors == neighbors)) {
      return v.id;
    }
  }
  return 0;
}

namespace {

enum class Init { xavier, zeros, ones, forget_bias, small, embed_bias };

struct ParamSpec {
  std::string name;
  Shape shape;
  Init init;
};

std::vector<ParamSpec> param_specs(const ModelConfig& c) {
  std::vector<ParamSpec> specs = {
      {"embed.node.w", {2, c.node_dim}, Init::xavier},
      {"embed.node.b", {c.node_dim}, Init::embed_bias},
  };
  if (c.sparsity) {
    const std::size_t aug = c.augmented_dim();
    const std::size_t dh = c.selector_head_dim();
    specs.insert(specs.end(), {
                                  {"embed.edge.w", {2, c.edge_dim}, Init::xavier},
                                  {"embed.edge.b", {c.edge_dim}, Init::embed_bias},
                                  {"selector.qkv.w", {aug, 3 * aug}, Init::xavier},
                                  {"selector.qkv.b", {3 * aug}, Init::zeros},
                                  {"selector.mlp1.w", {dh, dh}, Init::xavier},
                                  {"selector.mlp1.b", {dh}, Init::zeros},
                                  {"selector.mlp2.w", {dh, 1}, Init::xavier},
                                  {"selector.mlp2.b", {1}, Init::zeros},
                              });
  }
  for (std::size_t l = 0; l < c.encoder_layers; ++l) {
    const std::string p = "encoder." + std::to_string(l) + ".";
    specs.insert(specs.end(), {
                                  {p + "qkv.w", {c.node_dim, 3 * c.node_dim}, Init::xavier},
                                  {p + "qkv.b", {3 * c.node_dim}, Init::zeros},
                                  {p + "out.w", {c.node_dim, c.node_dim}, Init::xavier},
                                  {p + "out.b", {c.node_dim}, Init::zeros},
                                  {p + "ln1.g", {c.node_dim}, Init::ones},
                                  {p + "ln1.b", {c.node_dim}, Init::zeros},
                                  {p + "ff1.w", {c.node_dim, c.feedforward_dim}, Init::xavier},
                                  {p + "ff1.b", {c.feedforward_dim}, Init::zeros},
                                  {p + "ff2.w", {c.feedforward_dim, c.node_dim}, Init::xavier},
                                  {p + "ff2.b", {c.node_dim}, Init::zeros},
                                  {p + "ln2.g", {c.node_dim}, Init::ones},
                                  {p + "ln2.b", {c.node_dim}, Init::zeros},
                              });
  }
  specs.insert(specs.end(), {
                                {"lstm.wx", {c.node_dim, 4 * c.hidden_dim}, Init::xavier},
                                {"lstm.wh", {c.hidden_dim, 4 * c.hidden_dim}, Init::xavier},
                                {"lstm.b", {4 * c.hidden_dim}, Init::forget_bias},
                                {"head.w", {c.hidden_dim, 2}, Init::small},
                                {"head.b", {2}, Init::zeros},
                            });
  return specs;
}

}  // namespace

ParamStore init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ParamStore store;
  std::uint64_t index = 0;
  for (const auto& spec : param_specs(config)) {
    Rng rng = make_rng(seed, {0x1417, index++});
    Tensor t(spec.shape);
    switch (spec.init) {
      case Init::zeros:
        break;
      case Init::ones:
        for (double& x : t.data()) x = 1.0;
        break;
      case Init::forget_bias: {
        // gate order i, f, g, o
        const std::size_t h = spec.shape[0] / 4;
        for (std::size_t i = h; i < 2 * h; ++i) t[i] = 1.0;
        break;
      }
      case Init::xavier:
      case Init::small: {
        const double fan = static_cast<double>(spec.shape[0] + spec.shape[1]);
        double bound = std::sqrt(6.0 / fan);
        if (spec.init == Init::small) bound *= 0.1;
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (double& x : t.data()) x = dist(rng);
        break;
      }
      case Init::embed_bias: {
        // fan-in of a 2-D position input; a zero bias would make the first
        // layer norm blind to displacement magnitude
        const double bound = 1.0 / std::sqrt(2.0);
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (double& x : t.data()) x = dist(rng);
        break;
      }
    }
    store.set(spec.name, std::move(t));
  }
  return store;
}

void check_params(const ModelConfig& config, const ParamStore& params) {
  const auto specs = param_specs(config);
  if (specs.size() != params.size()) {
    throw ConfigMismatch("parameters hold " + std::to_string(params.size()) +
                         " tensors, configuration needs " + std::to_string(specs.size()));
  }
  for (const auto& spec : specs) {
    if (!params.contains(spec.name)) {
      throw ConfigMismatch("parameters lack tensor " + spec.name);
    }
    if (params.get(spec.name).shape() != spec.shape) {
      throw ConfigMismatch("parameter " + spec.name + " has shape " +
                           shape_str(params.get(spec.name).shape()) + ", configuration needs " +
                           shape_str(spec.shape));
    }
  }
}

}  // namespace gst
