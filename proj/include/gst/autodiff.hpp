#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "gst/tensor.hpp"

namespace gst {

struct Node;

// Receives d(root)/d(output) and accumulates into the gradient slots of the
// inputs. A null slot means that input does not need a gradient.
using BackwardFn =
    std::function<void(const Node& self, const Tensor& grad_out, std::vector<Tensor*>& grad_in)>;

/// One vertex of the computation graph. Immutable once built.
struct Node {
  std::string op;
  std::vector<std::shared_ptr<const Node>> inputs;
  Tensor value;
  bool requires_grad = false;
  BackwardFn backward;
  std::string name;  // set for named parameters
};

/// Handle to a computation node. Cheap to copy; shares the node.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<const Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  const std::string& op() const { return node_->op; }
  const Node* node() const { return node_.get(); }
  const std::shared_ptr<const Node>& node_ptr() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<const Node> node_;
};

Var constant(Tensor value);
Var parameter(Tensor value, std::string name = {});

/// Gradients of a scalar root with respect to every reachable node that
/// requires a gradient.
class Gradients {
 public:
  // Zero tensor of the right shape if `v` did not influence the root.
  Tensor of(const Var& v) const;
  bool contains(const Var& v) const { return grads_.contains(v.node()); }

 private:
  friend Gradients backward(const Var& root);
  std::unordered_map<const Node*, Tensor> grads_;
};

/// Reverse-mode sweep from a scalar root. Pure: the graph is not modified,
/// so repeated calls return identical results.
Gradients backward(const Var& root);

// Additive mask sentinel for dropped softmax entries.
inline constexpr double kMasked = -std::numeric_limits<double>::infinity();

// ---- elementwise (operands must have identical shapes) ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var relu(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);

// Multiplies by a constant tensor of identical shape (masking).
Var mul_const(const Var& a, const Tensor& c);
// Blocks gradient flow; value passes through.
Var detach(const Var& a);

// ---- linear algebra / layout ----
Var matmul(const Var& a, const Var& b);           // [m,k] x [k,n]
Var add_bias(const Var& a, const Var& bias);      // [m,n] + [n]
Var affine(const Var& x, const Var& weight, const Var& bias);
Var transpose(const Var& a);                      // rank 2
Var reshape(const Var& a, Shape shape);
Var permute(const Var& a, const std::vector<std::size_t>& axes);
Var concat(const std::vector<Var>& parts, std::size_t axis);
Var slice_cols(const Var& a, std::size_t begin, std::size_t end);  // rank 2

// ---- reductions ----
Var sum(const Var& a);                             // -> [1]
Var mean(const Var& a, std::size_t axis);          // axis removed (rank-1 -> [1])

// ---- normalisation ----
// Row-wise softmax over the last axis of a rank-2 tensor. `mask` holds 0 (keep)
// or kMasked (drop); rows with every entry dropped come out as zeros.
Var softmax_rows(const Var& a, const std::optional<Tensor>& mask = std::nullopt);
// Normalises the last axis of a rank-2 tensor, then applies gain and shift.
Var layer_norm(const Var& x, const Var& gain, const Var& shift, double eps = 1e-5);

/// Masked multi-head scaled dot-product attention over independent groups.
///
/// q, k, v are [groups*len, heads*head_dim]; row g*len+i is element i of group g.
/// key_mask is [groups, len] with 1 = attendable. A query whose keys are all
/// masked produces zeros. When `gate` ([groups*len, len]) is given, post-softmax
/// probabilities are multiplied by it and each row is renormalised to sum to 1
/// (zero sum -> zero output). Masked keys are skipped entirely, so they never
/// enter any reduction.
Var attention(const Var& q, const Var& k, const Var& v, std::size_t groups, std::size_t heads,
              const Tensor& key_mask, const Var* gate = nullptr);

/// Row-wise choice between two rank-2 tensors of equal shape: row r comes
/// from `when_true` if take[r], else from `when_false`. Values are copied.
Var select_rows(const std::vector<bool>& take, const Var& when_true, const Var& when_false);

/// Value is the row-wise one-hot argmax of `soft`; the gradient passes
/// straight through to `soft`. All-zero rows stay zero.
Var straight_through_one_hot(const Var& soft);

}  // namespace gst
