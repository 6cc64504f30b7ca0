#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "selfqa/tensor.hpp"

namespace selfqa {

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first use during backward
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backprop;  // accumulates this->grad into parents
  Parameter* param = nullptr;           // set for parameter leaves
  bool needs_grad = false;

  void ensure_grad();
};

/// Handle to a node in the expression graph. Graphs are built per forward
/// pass and freed when the last handle goes out of scope.
class Value {
 public:
  Value() = default;
  explicit Value(NodePtr n) : node(std::move(n)) {}

  static Value constant(Tensor t);
  static Value leaf(Parameter& p);

  bool valid() const { return node != nullptr; }
  const Tensor& tensor() const { return node->value; }
  double scalar() const;
  std::size_t rows() const { return node->value.rows(); }
  std::size_t cols() const { return node->value.cols(); }
  std::size_t size() const { return node->value.size(); }

  NodePtr node;
};

/// Reverse-mode sweep from a scalar loss. Gradients accumulate into each
/// reachable Parameter's grad (repeated calls keep adding).
void backward(const Value& loss);

// ---- primitives -----------------------------------------------------------

Value add(const Value& a, const Value& b);   // same shape, or one side scalar
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);   // elementwise, scalar broadcast
Value div(const Value& a, const Value& b);
Value neg(const Value& a);
Value scale(const Value& a, double c);
Value add_const(const Value& a, double c);

Value matmul(const Value& a, const Value& b);     // (m,k)x(k,n)
Value matmul_nt(const Value& a, const Value& b);  // (m,k)x(n,k)^T -> (m,n)
Value row_add(const Value& m, const Value& bias); // bias broadcast over rows
Value scale_rows(const Value& m, const Value& s); // row i scaled by s[i]

Value softmax_rows(const Value& z);      // stabilized; rejects non-finite input
Value log_softmax_rows(const Value& z);
Value vlog(const Value& a);
Value vexp(const Value& a);
Value relu(const Value& a);
Value clamp_max(const Value& a, double cap);

Value sum(const Value& a);    // -> scalar
Value mean(const Value& a);   // -> scalar
Value pick(const Value& a, std::size_t index);  // flat index -> scalar

/// -sum_i logp[i, target_i]; logp holds per-row log-probabilities.
Value nll_rows(const Value& logp, const std::vector<int>& targets);

Value reshape(const Value& a, std::vector<std::size_t> shape);
Value slice_rows(const Value& m, std::size_t r0, std::size_t r1);
Value slice_cols(const Value& m, std::size_t c0, std::size_t c1);
Value concat_rows(const std::vector<Value>& parts);
Value concat_cols(const std::vector<Value>& parts);
Value row(const Value& m, std::size_t r);  // one row as a rank-1 value

/// Rows of an embedding matrix selected by token id; grad scatters back.
Value embedding_rows(const Value& table, const std::vector<int>& ids);

Value layer_norm_rows(const Value& m, const Value& gain, const Value& bias,
                      double eps = 1e-5);

/// Adds -1e30 to entries above the diagonal (j > i) of a square score matrix.
Value add_causal_mask(const Value& scores);

Value digamma_v(const Value& a);  // elementwise; derivative is trigamma
Value lgamma_v(const Value& a);   // elementwise; derivative is digamma

/// Value copy with the gradient path severed.
Value detach(const Value& a);

/// Forward: one-hot(argmax) per row. Backward: identity into the soft input.
Value straight_through_onehot(const Value& soft);

/// Max over all parameter entries of
///   |analytic - central_difference| / (|analytic| + |central| + 1e-3);
/// the additive guard makes the comparison absolute for near-zero gradients,
/// where cancellation noise and O(eps^2) truncation would otherwise register
/// as pure relative error.
/// make_loss must rebuild the same scalar loss from current parameter values.
double finite_diff_check(const std::function<Value()>& make_loss,
                         const std::vector<Parameter*>& params, double eps);

}  // namespace selfqa
