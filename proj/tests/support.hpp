#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <random>
#include <vector>

#include "gst/autodiff.hpp"
#include "gst/params.hpp"
#include "gst/rng.hpp"

namespace gst::testing {

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape);
  for (auto& x : t.data()) x = u(rng);
  return t;
}

inline Tensor random_tensor(const Shape& shape, std::uint64_t seed, double lo = -2.0,
                            double hi = 2.0) {
  Rng rng = make_rng(seed, {0x7E57});
  return random_tensor(shape, rng, lo, hi);
}

/// sum(out * w) for fixed pseudo-random w, so every output entry matters with
/// a distinct weight.
inline Var weighted_sum(const Var& out, std::uint64_t seed = 99) {
  return sum(mul_const(out, random_tensor(out.shape(), seed, -1.0, 1.0)));
}

using Objective = std::function<Var(const std::vector<Var>&)>;

struct GradCheck {
  double worst = 0.0;        // largest relative error over inputs
  std::size_t worst_input = 0;
};

// Scale floor 1e-6: gradients that vanish analytically (a bias that cancels in
// a softmax) are compared against finite-difference roundoff absolutely.
inline double relative_error(const Tensor& analytic, const Tensor& numeric) {
  double scale = 1e-6;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
  }
  return max_abs_diff(analytic, numeric) / scale;
}

/// Compares backward() against central differences for every input.
inline GradCheck check_gradients(const Objective& f, const std::vector<Tensor>& inputs,
                                 double h = 1e-5) {
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(parameter(t));
  const Gradients grads = backward(f(vars));

  GradCheck result;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor numeric(inputs[k].shape());
    for (std::size_t e = 0; e < inputs[k].size(); ++e) {
      auto eval = [&](double delta) {
        std::vector<Var> shifted;
        for (std::size_t m = 0; m < inputs.size(); ++m) {
          Tensor t = inputs[m];
          if (m == k) t[e] += delta;
          shifted.push_back(constant(std::move(t)));
        }
        return f(shifted).value().item();
      };
      numeric[e] = (eval(h) - eval(-h)) / (2.0 * h);
    }
    const double err = relative_error(grads.of(vars[k]), numeric);
    if (err > result.worst) {
      result.worst = err;
      result.worst_input = k;
    }
  }
  return result;
}

using ModelObjective = std::function<Var(const ParamBinding&)>;

/// Central-difference check of every scalar in `store`. Returns the worst
/// relative error over parameter tensors and names it.
struct ParamGradCheck {
  double worst = 0.0;
  std::string worst_name;
};

inline ParamGradCheck check_param_gradients(const ParamStore& store, const ModelObjective& f,
                                            double h = 1e-5) {
  const ParamBinding binding(store);
  const GradientMap analytic = binding.gradients(backward(f(binding)));
  ParamGradCheck result;
  ParamStore probe = store;
  for (const auto& [name, value] : store.items()) {
    Tensor numeric(value.shape());
    for (std::size_t e = 0; e < value.size(); ++e) {
      const double x = value[e];
      probe.get_mut(name)[e] = x + h;
      const double up = f(ParamBinding(probe)).value().item();
      probe.get_mut(name)[e] = x - h;
      const double down = f(ParamBinding(probe)).value().item();
      probe.get_mut(name)[e] = x;
      numeric[e] = (up - down) / (2.0 * h);
    }
    const double err = relative_error(analytic.at(name), numeric);
    if (err > result.worst) {
      result.worst = err;
      result.worst_name = name;
    }
  }
  return result;
}

}  // namespace gst::testing
