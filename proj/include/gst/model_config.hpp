#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "gst/params.hpp"

namespace gst {

enum class SampleMode { soft, hard, deterministic };

std::string to_string(SampleMode mode);
SampleMode parse_sample_mode(const std::string& text);

/// Architecture hyperparameters. Defaults are the published sizes.
struct ModelConfig {
  std::size_t node_dim = 32;
  std::size_t edge_dim = 64;
  std::size_t hidden_dim = 32;
  std::size_t encoder_layers = 3;
  std::size_t encoder_heads = 8;
  std::size_t feedforward_dim = 128;
  std::size_t neighbors = 1;  // n: selector heads / neighbour cap
  bool sparsity = true;       // false bypasses the edge selector

  std::size_t augmented_dim() const { return 2 * node_dim + edge_dim; }
  std::size_t selector_head_dim() const { return augmented_dim() / neighbors; }
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// One row of the comparative-study grid (IDs 1-8).
struct Variant {
  int id;
  bool partial;
  bool sparsity;
  std::size_t neighbors;  // ignored when sparsity is off
};

const std::vector<Variant>& variants();
std::optional<Variant> variant_by_id(int id);
// ID matching the flags, or 0 if the combination is not in the grid.
int variant_id(bool partial, bool sparsity, std::size_t neighbors);

/// Fresh parameters for `config`, deterministic in `seed`.
ParamStore init_params(const ModelConfig& config, std::uint64_t seed);

/// Throws ConfigMismatch unless `params` has exactly the tensors `config` needs.
void check_params(const ModelConfig& config, const ParamStore& params);

}  // namespace gst
