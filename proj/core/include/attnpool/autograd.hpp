#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "attnpool/tensor.hpp"

// Tape-based reverse-mode differentiation over the small operation set the
// pooling heads need. A Tape records nodes in execution order; backward()
// sweeps it once in reverse, accumulating adjoints into every node.
namespace attnpool::ag {

using NodeId = std::size_t;

enum class Op : std::uint8_t {
  kLeaf,
  kMatmul,
  kTranspose,
  kAdd,
  kSubtract,
  kScale,
  kElementwiseMul,
  kRelu,
  kSum,
  kSoftmaxCrossEntropy,
  kSigmoidCrossEntropy,
  kSumOfSquares,
  kCircularConvolve,  // row-wise circular convolution, used by the sketch head
};

const char* op_name(Op op);

// Per-op constants that are not themselves nodes.
struct OpAttrs {
  double alpha = 1.0;              // kScale
  std::size_t label = 0;           // kSoftmaxCrossEntropy
  std::optional<Matrix> targets;   // kSigmoidCrossEntropy, entries in [0, 1]
};

struct Node {
  NodeId id = 0;
  Op op = Op::kLeaf;
  std::vector<NodeId> parents;
  Matrix value;
  Matrix grad;
  OpAttrs attrs;
};

class Tape {
 public:
  NodeId leaf(Matrix value);

  // Computes the forward value of `op` applied to `inputs` and appends it.
  // Throws ValidationError for an unknown tag, a missing input or the wrong
  // arity, and ShapeError when the input shapes do not fit the op.
  NodeId record(Op op, std::span<const NodeId> inputs, OpAttrs attrs = {});

  // Reverse sweep from a scalar node. Overwrites all grads; values untouched.
  void backward(NodeId loss);

  const Node& node(NodeId id) const { return nodes_.at(id); }
  const Matrix& value(NodeId id) const { return nodes_.at(id).value; }
  const Matrix& grad(NodeId id) const { return nodes_.at(id).grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  void propagate(const Node& n);

  std::vector<Node> nodes_;
};

// Handle into a tape, so graphs read like ordinary expressions.
struct Var {
  Tape* tape = nullptr;
  NodeId id = 0;

  const Matrix& value() const { return tape->value(id); }
  const Matrix& grad() const { return tape->grad(id); }
};

Var leaf(Tape& tape, Matrix value);
Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var subtract(Var a, Var b);
Var scale(Var a, double alpha);
Var elementwise_mul(Var a, Var b);
Var relu(Var a);
Var sum(Var a);
// log-sum-exp(z) - z[label] over all entries of `logits`.
Var softmax_cross_entropy(Var logits, std::size_t label);
// Sum over entries of the numerically stable binary cross-entropy with logits.
Var sigmoid_cross_entropy(Var logits, const Matrix& targets);
Var sum_of_squares(Var a);
// out[r][k] = sum_i u[r][i] * v[r][(k - i) mod d] for n x d inputs.
Var circular_convolve(Var u, Var v);

void backward(Var loss);

// A scalar function of a list of parameter tensors, expressed as a graph.
using ScalarGraph = std::function<Var(Tape&, std::span<const Var>)>;

struct GradResult {
  double loss = 0.0;
  std::vector<Matrix> grads;
};

GradResult evaluate_with_grad(const ScalarGraph& f, std::span<const Matrix> params);
double evaluate(const ScalarGraph& f, std::span<const Matrix> params);

// Max over every parameter coordinate of |analytic - numeric| / (1 + |numeric|),
// with the numeric derivative taken by central differences.
double finite_diff_check(const ScalarGraph& f, std::span<const Matrix> params, double step = 1e-5);

}  // namespace attnpool::ag
