#include "gst/adam.hpp"

#include <cmath>

#include "gst/errors.hpp"

namespace gst {

void adam_step(ParamStore& params, const GradientMap& grads, AdamState& state) {
  for (const auto& [name, g] : grads) {
    if (!params.contains(name)) {
      throw ConfigMismatch("adam: gradient for unknown parameter " + name);
    }
    if (g.shape() != params.get(name).shape()) {
      throw ShapeError("adam: gradient shape " + shape_str(g.shape()) + " for parameter " + name +
                       " of shape " + shape_str(params.get(name).shape()));
    }
    if (!g.all_finite()) {
      throw NumericalError("adam: non-finite gradient for parameter " + name);
    }
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);

  for (const auto& [name, value] : params.items()) {
    auto& m = state.first_moment.try_emplace(name, value.shape()).first->second;
    auto& v = state.second_moment.try_emplace(name, value.shape()).first->second;
    auto git = grads.find(name);
    Tensor& p = params.get_mut(name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = git == grads.end() ? 0.0 : git->second[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

double clip_global_norm(GradientMap& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, g] : grads) {
    for (double x : g.data()) sq += x * x;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double factor = max_norm / norm;
    for (auto& [name, g] : grads) {
      for (double& x : g.data()) x *= factor;
    }
  }
  return norm;
}

}  // namespace gst
