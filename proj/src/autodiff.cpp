#include "gst/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

namespace gst {

namespace {

Var make_node(std::string op, std::vector<Var> inputs, Tensor value, BackwardFn backward) {
  auto node = std::make_shared<Node>();
  node->op = std::move(op);
  node->value = std::move(value);
  node->requires_grad =
      std::any_of(inputs.begin(), inputs.end(), [](const Var& v) { return v.requires_grad(); });
  if (node->requires_grad) {
    node->inputs.reserve(inputs.size());
    for (const auto& in : inputs) {
      node->inputs.push_back(in.node_ptr());
    }
    node->backward = std::move(backward);
  }
  return Var(std::move(node));
}

void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

void require_rank(const char* op, const Var& a, std::size_t rank) {
  if (a.value().rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(a.shape()));
  }
}

template <typename F>
Tensor map_values(const Tensor& a, F&& f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    out[i] = f(a[i]);
  }
  return out;
}

// Unary op whose derivative is expressed through input x and output y.
template <typename Fwd, typename Deriv>
Var unary(const char* name, const Var& a, Fwd&& fwd, Deriv deriv) {
  Tensor value = map_values(a.value(), fwd);
  return make_node(name, {a}, std::move(value),
                   [deriv](const Node& self, const Tensor& g, std::vector<Tensor*>& gi) {
                     const Tensor& x = self.inputs[0]->value;
                     const Tensor& y = self.value;
                     Tensor& dx = *gi[0];
                     for (std::size_t i = 0; i < g.size(); ++i) {
                       dx[i] += g[i] * deriv(x[i], y[i]);
                     }
                   });
}

// C[m,n] += A[m,k] * B[k,n]. Every output element is reduced over k in
// ascending order, independent of m, so a row's result never depends on the
// other rows. The k-outer loop keeps one row of B hot while sweeping C.
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
              std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double aip = a[i * k + p];
      if (aip == 0.0) {
        continue;
      }
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        crow[j] += aip * brow[j];
      }
    }
  }
}

std::vector<double> transposed(const double* a, std::size_t rows, std::size_t cols) {
  std::vector<double> t(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) t[j * rows + i] = a[i * cols + j];
  }
  return t;
}

std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) {
    strides[i - 1] = strides[i] * shape[i];
  }
  return strides;
}

}  // namespace

Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->op = "constant";
  node->value = std::move(value);
  return Var(std::move(node));
}

Var parameter(Tensor value, std::string name) {
  auto node = std::make_shared<Node>();
  node->op = "parameter";
  node->value = std::move(value);
  node->requires_grad = true;
  node->name = std::move(name);
  return Var(std::move(node));
}

Tensor Gradients::of(const Var& v) const {
  auto it = grads_.find(v.node());
  if (it == grads_.end()) {
    return Tensor(v.shape());
  }
  return it->second;
}

Gradients backward(const Var& root) {
  if (root.value().size() != 1) {
    throw ShapeError("backward: root must be scalar, got " + shape_str(root.shape()));
  }
  Gradients result;
  if (!root.requires_grad()) {
    return result;
  }

  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<const Node*> order;
  std::unordered_set<const Node*> visited;
  std::vector<std::pair<const Node*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      const Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  auto& grads = result.grads_;
  grads.emplace(root.node(), Tensor::full(root.shape(), 1.0));
  std::vector<Tensor*> slots;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Node* node = *it;
    if (!node->backward) {
      continue;
    }
    auto found = grads.find(node);
    if (found == grads.end()) {
      continue;
    }
    slots.assign(node->inputs.size(), nullptr);
    for (std::size_t i = 0; i < node->inputs.size(); ++i) {
      const Node* in = node->inputs[i].get();
      if (!in->requires_grad) {
        continue;
      }
      auto [slot, inserted] = grads.try_emplace(in, in->value.shape());
      slots[i] = &slot->second;
    }
    // The map is node-based, so `found` stays valid across insertions.
    node->backward(*node, found->second, slots);
  }
  return result;
}

// ---------------------------------------------------------------- elementwise

Var add(const Var& a, const Var& b) {
  require_same_shape("add", a, b);
  Tensor out = a.value();
  out += b.value();
  return make_node("add", {a, b}, std::move(out),
                   [](const Node&, const Tensor& g, std::vector<Tensor*>& gi) {
                     if (gi[0]) *gi[0] += g;
                     if (gi[1]) *gi[1] += g;
                   });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape("sub", a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = a.value()[i] - b.value()[i];
  }
  return make_node("sub", {a, b}, std::move(out),
                   [](const Node&, const Tensor& g, std::vector<Tensor*>& gi) {
                     if (gi[0]) *gi[0] += g;
                     if (gi[1]) {
                       for (std::size_t i = 0; i < g.size(); ++i) (*gi[1])[i] -= g[i];
                     }
                   });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape("mul", a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = a.value()[i] * b.value()[i];
  }
  return make_node("mul", {a, b}, std::move(out),
                   [](const Node& self, const Tensor& g, std::vector<Tensor*>& gi) {
                     const Tensor& x = self.inputs[0]->value;
                     const Tensor& y = self.inputs[1]->value;
                     for (std::size_t i = 0; i < g.size(); ++i) {
                       if (gi[0]) (*gi[0])[i] += g[i] * y[i];
                       if (gi[1]) (*gi[1])[i] += g[i] * x[i];
                     }
                   });
}

Var div(const Var& a, const Var& b) {
  require_same_shape("div", a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = a.value()[i] / b.value()[i];
  }
  return make_node("div", {a, b}, std::move(out),
                   [](const Node& self, const Tensor& g, std::vector<Tensor*>& gi) {
                     const Tensor& y = self.inputs[1]->value;
                     const Tensor& q = self.value;
                     for (std::size_t i = 0; i < g.size(); ++i) {
                       if (gi[0]) (*gi[0])[i] += g[i] / y[i];
                       if (gi[1]) (*gi[1])[i] -= g[i] * q[i] / y[i];
                     }
                   });
}

Var scale(const Var& a, double factor) {
  Tensor out = map_values(a.value(), [factor](double x) { return x * factor; });
  return make_node("scale", {a}, std::move(out),
                   [factor](const Node&, const Tensor& g, std::vector<Tensor*>& gi) {
                     for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i] * factor;
                   });
}

Var mul_const(const Var& a, const Tensor& c) {
  if (a.shape() != c.shape()) {
    throw ShapeError("mul_const: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(c.shape()));
  }
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = a.value()[i] * c[i];
  }
  return make_node("mul_const", {a}, std::move(out),
                   [c](const Node&, const Tensor& g, std::vector<Tensor*>& gi) {
                     for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i] * c[i];
                   });
}

Var detach(const Var& a) { return constant(a.value()); }

Var tanh(const Var& a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& a) {
  return unary("sigmoid", a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
               [](double, double y) { return y * (1.0 - y); });
}

Var relu(const Var& a) {
  return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var exp(const Var& a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
  return unary("log", a, [](double x) { return std::log(x); },
               [](double x, double) { return 1.0 / x; });
}

// ---------------------------------------------------------------- linear algebra

Var matmul(const Var& a, const Var& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.shape()[0];
  const std::size_t k = a.shape()[1];
  const std::size_t n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ShapeError("matmul: shape mismatch " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  Tensor out({m, n});
  gemm_acc(a.value().data().data(), b.value().data().data(), out.data().data(), m, k, n);
  return make_node("matmul", {a, b}, std::move(out),
                   [m, k, n](const Node& self, const Tensor& g, std::vector<Tensor*>& gi) {
                     const double* av = self.inputs[0]->value.data().data();
                     const double* bv = self.inputs[1]->value.data().data();
                     const double* gv = g.data().data();
                     if (gi[0]) {
                       // dA = dC * B^T
                       const auto bt = transposed(bv, k, n);
                       gemm_acc(gv, bt.data(), gi[0]->data().data(), m, n, k);
                     }
                     if (gi[1]) {
                       // dB = A^T * dC
                       const auto at = transposed(av, m, k);
                       gemm_acc(at.data(), gv, gi[1]->data().data(), k, m, n);
                     }
                   });
}

Var add_bias(const Var& a, const Var& bias) {
  require_rank("add_bias", a, 2);
  const std::size_t m = a.shape()[0];
  const std::size_t n = a.shape()[1];
  if (bias.value().rank() != 1 || bias.shape()[0] != n) {
    throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " for " +
                     shape_str(a.shape()));
  }
  Tensor out = a.value();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bias.value()[j];
  }
  return make_node("add_bias", {a, bias}, std::move(out),
                   [m, n](const Node&, const Tensor& g, std::vector<Tensor*>& gi) {
                     if (gi[0]) *gi[0] += g;
                     if (gi[1]) {
                       for (std::size_t i = 0; i < m; ++i) {
                         for (std::size_t j = 0; j < n; ++j) (*gi[1])[j] += g[i * n + j];
                       }
                     }
                   });
}

Var affine(const Var& x, const Var& weight, const Var& bias) {
  return add_bias(matmul(x, weight), bias);
}

Var transpose(const Var& a) {
  require_rank("transpose", a, 2);
  return permute(a, {1, 0});
}

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return make_node("reshape", {a}, std::move(out),
                   [](const Node&, const Tensor& g, std::vector<Tensor*>& gi) {
                     for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i];
                   });
}

Var permute(const Var& a, const std::vector<std::size_t>& axes) {
  const Shape& in_shape = a.shape();
  const std::size_t rank = in_shape.size();
  std::vector<bool> seen(rank, false);
  if (axes.size() != rank) {
    throw ShapeError("permute: " + std::to_string(axes.size()) + " axes for " +
                     shape_str(in_shape));
  }
  for (auto ax : axes) {
    if (ax >= rank || seen[ax]) {
      throw ShapeError("permute: invalid axis list for " + shape_str(in_shape));
    }
    seen[ax] = true;
  }
  Shape out_shape(rank);
  for (std::size_t d = 0; d < rank; ++d) out_shape[d] = in_shape[axes[d]];
  const auto in_strides = strides_of(in_shape);
  // source offset of each output element
  std::vector<std::size_t> src(a.value().size());
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t flat = 0; flat < src.size(); ++flat) {
    std::size_t off = 0;
    for (std::size_t d = 0; d < rank; ++d) off += idx[d] * in_strides[axes[d]];
    src[flat] = off;
    for (std::size_t d = rank; d-- > 0;) {
      if (++idx[d] < out_shape[d]) break;
      idx[d] = 0;
    }
  }
  Tensor out(out_shape);
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = a.value()[src[i]];
  return make_node("permute", {a}, std::move(out),
                   [src = std::move(src)](const Node&, const Tensor& g, std::vector<Tensor*>& gi) {
                     for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[src[i]] += g[i];
                   });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) {
    throw ShapeError("concat: no inputs");
  }
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) {
    throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(first));
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) {
      ok = d == axis || s[d] == first[d];
    }
    if (!ok) {
      throw ShapeError("concat: shape mismatch " + shape_str(first) + " vs " + shape_str(s));
    }
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];

  std::vector<std::size_t> chunk(parts.size());
  for (std::size_t p = 0; p < parts.size(); ++p) chunk[p] = parts[p].shape()[axis] * inner;
  const std::size_t out_chunk = out_shape[axis] * inner;

  Tensor out(out_shape);
  for (std::size_t o = 0; o < outer; ++o) {
    std::size_t dst = o * out_chunk;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      const auto src = parts[p].value().data().subspan(o * chunk[p], chunk[p]);
      std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(dst));
      dst += chunk[p];
    }
  }
  return make_node("concat", parts, std::move(out),
                   [outer, chunk, out_chunk](const Node&, const Tensor& g,
                                             std::vector<Tensor*>& gi) {
                     for (std::size_t o = 0; o < outer; ++o) {
                       std::size_t src = o * out_chunk;
                       for (std::size_t p = 0; p < gi.size(); ++p) {
                         if (gi[p]) {
                           double* dst = gi[p]->data().data() + o * chunk[p];
                           for (std::size_t i = 0; i < chunk[p]; ++i) dst[i] += g[src + i];
                         }
                         src += chunk[p];
                       }
                     }
                   });
}

Var slice_cols(const Var& a, std::size_t begin, std::size_t end) {
  require_rank("slice_cols", a, 2);
  const std::size_t m = a.shape()[0];
  const std::size_t n = a.shape()[1];
  if (begin >= end || end > n) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") of " + shape_str(a.shape()));
  }
  const std::size_t w = end - begin;
  Tensor out({m, w});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = a.value()[i * n + begin + j];
  }
  return make_node("slice_cols", {a}, std::move(out),
                   [m, n, w, begin](const Node&, const Tensor& g, std::vector<Tensor*>& gi) {
                     for (std::size_t i = 0; i < m; ++i) {
                       for (std::size_t j = 0; j < w; ++j) (*gi[0])[i * n + begin + j] += g[i * w + j];
                     }
                   });
}

// ---------------------------------------------------------------- reductions

Var sum(const Var& a) {
  double acc = 0.0;
  for (double x : a.value().data()) acc += x;
  return make_node("sum", {a}, Tensor::scalar(acc),
                   [](const Node&, const Tensor& g, std::vector<Tensor*>& gi) {
                     const double gv = g[0];
                     for (auto& d : gi[0]->data()) d += gv;
                   });
}

Var mean(const Var& a, std::size_t axis) {
  const Shape& s = a.shape();
  if (axis >= s.size()) {
    throw ShapeError("mean: axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  std::size_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  const std::size_t len = s[axis];
  Shape out_shape;
  for (std::size_t d = 0; d < s.size(); ++d) {
    if (d != axis) out_shape.push_back(s[d]);
  }
  if (out_shape.empty()) out_shape = {1};
  Tensor out(out_shape);
  const double inv = 1.0 / static_cast<double>(len);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      double acc = 0.0;
      for (std::size_t l = 0; l < len; ++l) acc += a.value()[(o * len + l) * inner + in];
      out[o * inner + in] = acc * inv;
    }
  }
  return make_node("mean", {a}, std::move(out),
                   [outer, inner, len, inv](const Node&, const Tensor& g,
                                            std::vector<Tensor*>& gi) {
                     for (std::size_t o = 0; o < outer; ++o) {
                       for (std::size_t in = 0; in < inner; ++in) {
                         const double v = g[o * inner + in] * inv;
                         for (std::size_t l = 0; l < len; ++l) {
                           (*gi[0])[(o * len + l) * inner + in] += v;
                         }
                       }
                     }
                   });
}

// ---------------------------------------------------------------- normalisation

Var softmax_rows(const Var& a, const std::optional<Tensor>& mask) {
  require_rank("softmax_rows", a, 2);
  if (mask && mask->shape() != a.shape()) {
    throw ShapeError("softmax_rows: mask " + shape_str(mask->shape()) + " for " +
                     shape_str(a.shape()));
  }
  const std::size_t m = a.shape()[0];
  const std::size_t n = a.shape()[1];
  const Tensor& x = a.value();
  Tensor out({m, n});
  auto kept = [&](std::size_t idx) { return !mask || (*mask)[idx] != kMasked; };
  for (std::size_t i = 0; i < m; ++i) {
    double hi = kMasked;
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t idx = i * n + j;
      if (kept(idx)) hi = std::max(hi, x[idx] + (mask ? (*mask)[idx] : 0.0));
    }
    if (hi == kMasked) {
      continue;  // fully masked row stays zero
    }
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t idx = i * n + j;
      if (kept(idx)) {
        out[idx] = std::exp(x[idx] + (mask ? (*mask)[idx] : 0.0) - hi);
        total += out[idx];
      }
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= total;
  }
  return make_node("softmax_rows", {a}, std::move(out),
                   [m, n](const Node& self, const Tensor& g, std::vector<Tensor*>& gi) {
                     const Tensor& p = self.value;
                     for (std::size_t i = 0; i < m; ++i) {
                       double dot = 0.0;
                       for (std::size_t j = 0; j < n; ++j) dot += p[i * n + j] * g[i * n + j];
                       for (std::size_t j = 0; j < n; ++j) {
                         const std::size_t idx = i * n + j;
                         (*gi[0])[idx] += p[idx] * (g[idx] - dot);
                       }
                     }
                   });
}

Var layer_norm(const Var& x, const Var& gain, const Var& shift, double eps) {
  require_rank("layer_norm", x, 2);
  const std::size_t m = x.shape()[0];
  const std::size_t n = x.shape()[1];
  if (gain.shape() != Shape{n} || shift.shape() != Shape{n}) {
    throw ShapeError("layer_norm: gain " + shape_str(gain.shape()) + " / shift " +
                     shape_str(shift.shape()) + " for " + shape_str(x.shape()));
  }
  Tensor normed({m, n});
  std::vector<double> inv_std(m);
  Tensor out({m, n});
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += x.value()[i * n + j];
    mu *= inv_n;
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = x.value()[i * n + j] - mu;
      var += d * d;
    }
    var *= inv_n;
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t idx = i * n + j;
      normed[idx] = (x.value()[idx] - mu) * inv_std[i];
      out[idx] = normed[idx] * gain.value()[j] + shift.value()[j];
    }
  }
  return make_node(
      "layer_norm", {x, gain, shift}, std::move(out),
      [m, n, inv_n, normed = std::move(normed), inv_std = std::move(inv_std)](
          const Node& self, const Tensor& g, std::vector<Tensor*>& gi) {
        const Tensor& gamma = self.inputs[1]->value;
        for (std::size_t i = 0; i < m; ++i) {
          double mean_dn = 0.0;
          double mean_dn_xn = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            const std::size_t idx = i * n + j;
            const double dn = g[idx] * gamma[j];
            mean_dn += dn;
            mean_dn_xn += dn * normed[idx];
            if (gi[1]) (*gi[1])[j] += g[idx] * normed[idx];
            if (gi[2]) (*gi[2])[j] += g[idx];
          }
          mean_dn *= inv_n;
          mean_dn_xn *= inv_n;
          if (gi[0]) {
            for (std::size_t j = 0; j < n; ++j) {
              const std::size_t idx = i * n + j;
              const double dn = g[idx] * gamma[j];
              (*gi[0])[idx] += inv_std[i] * (dn - mean_dn - normed[idx] * mean_dn_xn);
            }
          }
        }
      });
}

// ---------------------------------------------------------------- attention

Var attention(const Var& q, const Var& k, const Var& v, std::size_t groups, std::size_t heads,
              const Tensor& key_mask, const Var* gate) {
  require_rank("attention", q, 2);
  require_same_shape("attention", q, k);
  require_same_shape("attention", q, v);
  const std::size_t rows = q.shape()[0];
  const std::size_t width = q.shape()[1];
  if (groups == 0 || heads == 0 || rows % groups != 0 || width % heads != 0) {
    throw ShapeError("attention: " + shape_str(q.shape()) + " not divisible into " +
                     std::to_string(groups) + " groups x " + std::to_string(heads) + " heads");
  }
  const std::size_t len = rows / groups;
  const std::size_t dh = width / heads;
  if (key_mask.shape() != Shape{groups, len}) {
    throw ShapeError("attention: key mask " + shape_str(key_mask.shape()) + ", expected " +
                     shape_str({groups, len}));
  }
  if (gate && gate->shape() != Shape{rows, len}) {
    throw ShapeError("attention: gate " + shape_str(gate->shape()) + ", expected " +
                     shape_str({rows, len}));
  }
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();

  // probabilities and final weights, [groups, heads, len, len]
  Tensor probs({groups * heads * len * len});
  Tensor weights({groups * heads * len * len});
  std::vector<double> sums(groups * heads * len, 0.0);
  Tensor out({rows, width});

  std::vector<std::size_t> keys;
  for (std::size_t g = 0; g < groups; ++g) {
    keys.clear();
    for (std::size_t j = 0; j < len; ++j) {
      if (key_mask[g * len + j] != 0.0) keys.push_back(j);
    }
    if (keys.empty()) {
      continue;
    }
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t col = h * dh;
      for (std::size_t i = 0; i < len; ++i) {
        const std::size_t qi = (g * len + i) * width + col;
        const std::size_t base = ((g * heads + h) * len + i) * len;
        double hi = kMasked;
        for (auto j : keys) {
          const std::size_t kj = (g * len + j) * width + col;
          double z = 0.0;
          for (std::size_t d = 0; d < dh; ++d) z += qv[qi + d] * kv[kj + d];
          z *= sc;
          probs[base + j] = z;
          hi = std::max(hi, z);
        }
        double total = 0.0;
        for (auto j : keys) {
          probs[base + j] = std::exp(probs[base + j] - hi);
          total += probs[base + j];
        }
        for (auto j : keys) probs[base + j] /= total;

        if (gate) {
          const std::size_t grow = (g * len + i) * len;
          double s = 0.0;
          for (auto j : keys) {
            weights[base + j] = probs[base + j] * gate->value()[grow + j];
            s += weights[base + j];
          }
          sums[(g * heads + h) * len + i] = s;
          for (auto j : keys) weights[base + j] = s > 0.0 ? weights[base + j] / s : 0.0;
        } else {
          for (auto j : keys) weights[base + j] = probs[base + j];
        }
        for (auto j : keys) {
          const double w = weights[base + j];
          if (w == 0.0) continue;
          const std::size_t vj = (g * len + j) * width + col;
          for (std::size_t d = 0; d < dh; ++d) out[qi + d] += w * vv[vj + d];
        }
      }
    }
  }

  std::vector<Var> inputs{q, k, v};
  if (gate) inputs.push_back(*gate);
  const bool gated = gate != nullptr;
  return make_node(
      "attention", std::move(inputs), std::move(out),
      [=, probs = std::move(probs), weights = std::move(weights), sums = std::move(sums)](
          const Node& self, const Tensor& gout, std::vector<Tensor*>& gi) {
        const Tensor& qv = self.inputs[0]->value;
        const Tensor& kv = self.inputs[1]->value;
        const Tensor& vv = self.inputs[2]->value;
        std::vector<std::size_t> keys;
        std::vector<double> dw(len);
        std::vector<double> dp(len);
        for (std::size_t g = 0; g < groups; ++g) {
          keys.clear();
          for (std::size_t j = 0; j < len; ++j) {
            if (key_mask[g * len + j] != 0.0) keys.push_back(j);
          }
          if (keys.empty()) continue;
          for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t col = h * dh;
            for (std::size_t i = 0; i < len; ++i) {
              const std::size_t qi = (g * len + i) * width + col;
              const std::size_t base = ((g * heads + h) * len + i) * len;
              for (auto j : keys) {
                const std::size_t vj = (g * len + j) * width + col;
                double acc = 0.0;
                for (std::size_t d = 0; d < dh; ++d) acc += gout[qi + d] * vv[vj + d];
                dw[j] = acc;
                if (gi[2]) {
                  const double w = weights[base + j];
                  for (std::size_t d = 0; d < dh; ++d) (*gi[2])[vj + d] += w * gout[qi + d];
                }
              }
              if (gated) {
                const double s = sums[(g * heads + h) * len + i];
                const std::size_t grow = (g * len + i) * len;
                double dot = 0.0;
                for (auto j : keys) dot += dw[j] * weights[base + j];
                for (auto j : keys) {
                  const double du = s > 0.0 ? (dw[j] - dot) / s : 0.0;
                  dp[j] = du * self.inputs[3]->value[grow + j];
                  if (gi[3]) (*gi[3])[grow + j] += du * probs[base + j];
                }
              } else {
                for (auto j : keys) dp[j] = dw[j];
              }
              double dot = 0.0;
              for (auto j : keys) dot += probs[base + j] * dp[j];
              for (auto j : keys) {
                const double dz = probs[base + j] * (dp[j] - dot) * sc;
                if (dz == 0.0) continue;
                const std::size_t kj = (g * len + j) * width + col;
                if (gi[0]) {
                  for (std::size_t d = 0; d < dh; ++d) (*gi[0])[qi + d] += dz * kv[kj + d];
                }
                if (gi[1]) {
                  for (std::size_t d = 0; d < dh; ++d) (*gi[1])[kj + d] += dz * qv[qi + d];
                }
              }
            }
          }
        }
      });
}

Var select_rows(const std::vector<bool>& take, const Var& when_true, const Var& when_false) {
  require_rank("select_rows", when_true, 2);
  require_same_shape("select_rows", when_true, when_false);
  const std::size_t m = when_true.shape()[0];
  const std::size_t n = when_true.shape()[1];
  if (take.size() != m) {
    throw ShapeError("select_rows: " + std::to_string(take.size()) + " flags for " +
                     shape_str(when_true.shape()));
  }
  Tensor out = when_false.value();
  for (std::size_t i = 0; i < m; ++i) {
    if (!take[i]) continue;
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = when_true.value()[i * n + j];
  }
  return make_node("select_rows", {when_true, when_false}, std::move(out),
                   [take, n](const Node&, const Tensor& g, std::vector<Tensor*>& gi) {
                     for (std::size_t i = 0; i < take.size(); ++i) {
                       Tensor* dst = take[i] ? gi[0] : gi[1];
                       if (!dst) continue;
                       for (std::size_t j = 0; j < n; ++j) (*dst)[i * n + j] += g[i * n + j];
                     }
                   });
}

Var straight_through_one_hot(const Var& soft) {
  require_rank("straight_through_one_hot", soft, 2);
  const std::size_t m = soft.shape()[0];
  const std::size_t n = soft.shape()[1];
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t best = n;
    double best_val = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double p = soft.value()[i * n + j];
      if (p > best_val) {
        best_val = p;
        best = j;
      }
    }
    if (best < n) out[i * n + best] = 1.0;
  }
  return make_node("straight_through", {soft}, std::move(out),
                   [](const Node&, const Tensor& g, std::vector<Tensor*>& gi) { *gi[0] += g; });
}

}  // namespace gst
