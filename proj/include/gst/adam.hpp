#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "gst/params.hpp"

namespace gst {

struct AdamState {
  std::uint64_t step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::map<std::string, Tensor> first_moment;
  std::map<std::string, Tensor> second_moment;
};

/// One bias-corrected Adam update of every parameter in `params`. Parameters
/// without an entry in `grads` are treated as having zero gradient. Throws
/// NumericalError naming the parameter if any gradient is non-finite; in that
/// case nothing is modified.
void adam_step(ParamStore& params, const GradientMap& grads, AdamState& state);

/// Scales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_global_norm(GradientMap& grads, double max_norm);

}  // namespace gst
