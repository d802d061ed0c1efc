#include "attnpool/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "attnpool/errors.hpp"

namespace attnpool::ag {

const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kMatmul: return "matmul";
    case Op::kTranspose: return "transpose";
    case Op::kAdd: return "add";
    case Op::kSubtract: return "subtract";
    case Op::kScale: return "scale";
    case Op::kElementwiseMul: return "elementwise_mul";
    case Op::kRelu: return "relu";
    case Op::kSum: return "sum";
    case Op::kSoftmaxCrossEntropy: return "softmax_cross_entropy";
    case Op::kSigmoidCrossEntropy: return "sigmoid_cross_entropy";
    case Op::kSumOfSquares: return "sum_of_squares";
    case Op::kCircularConvolve: return "circular_convolve";
  }
  return "unknown";
}

namespace {

std::size_t arity(Op op) {
  switch (op) {
    case Op::kLeaf: return 0;
    case Op::kMatmul:
    case Op::kAdd:
    case Op::kSubtract:
    case Op::kElementwiseMul:
    case Op::kCircularConvolve: return 2;
    case Op::kTranspose:
    case Op::kScale:
    case Op::kRelu:
    case Op::kSum:
    case Op::kSoftmaxCrossEntropy:
    case Op::kSigmoidCrossEntropy:
    case Op::kSumOfSquares: return 1;
  }
  throw ValidationError("unknown op tag " + std::to_string(static_cast<int>(op)));
}

Matrix scalar(double v) { return Matrix(1, 1, v); }

double log_sum_exp(std::span<const double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double acc = 0.0;
  for (double v : z) acc += std::exp(v - m);
  return m + std::log(acc);
}

// Direct O(n d^2) circular convolution of matching rows.
Matrix circ_conv_rows(const Matrix& u, const Matrix& v) {
  if (u.rows() != v.rows() || u.cols() != v.cols()) {
    throw ShapeError("circular_convolve: shape mismatch " + u.shape().to_string() + " and " +
                     v.shape().to_string());
  }
  const std::size_t n = u.rows(), d = u.cols();
  Matrix out(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < d; ++i) {
      const double ui = u(r, i);
      if (ui == 0.0) continue;
      for (std::size_t j = 0; j < d; ++j) out(r, (i + j) % d) += ui * v(r, j);
    }
  }
  return out;
}

// Adjoint of circ_conv_rows with respect to its first argument:
// g_u[r][i] = sum_k g[r][k] * v[r][(k - i) mod d].
Matrix circ_corr_rows(const Matrix& g, const Matrix& v) {
  const std::size_t n = g.rows(), d = g.cols();
  Matrix out(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < d; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) acc += g(r, (i + j) % d) * v(r, j);
      out(r, i) = acc;
    }
  }
  return out;
}

void accumulate(Matrix& into, const Matrix& delta) {
  for (std::size_t i = 0; i < into.size(); ++i) into[i] += delta[i];
}

}  // namespace

NodeId Tape::leaf(Matrix value) {
  Node n;
  n.id = nodes_.size();
  n.op = Op::kLeaf;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return nodes_.back().id;
}

NodeId Tape::record(Op op, std::span<const NodeId> inputs, OpAttrs attrs) {
  const std::size_t want = arity(op);
  if (op == Op::kLeaf) throw ValidationError("leaves are created with Tape::leaf, not record");
  if (inputs.size() != want) {
    throw ValidationError(std::string(op_name(op)) + " takes " + std::to_string(want) + " inputs, got " +
                          std::to_string(inputs.size()));
  }
  for (auto id : inputs) {
    if (id >= nodes_.size()) throw ValidationError("input node " + std::to_string(id) + " is not on the tape");
  }
  const Matrix& a = nodes_[inputs[0]].value;
  const Matrix* b = want == 2 ? &nodes_[inputs[1]].value : nullptr;

  Matrix value;
  switch (op) {
    case Op::kMatmul: value = attnpool::matmul(a, *b); break;
    case Op::kTranspose: value = attnpool::transpose(a); break;
    case Op::kAdd: value = attnpool::add(a, *b); break;
    case Op::kSubtract: value = attnpool::subtract(a, *b); break;
    case Op::kScale: value = attnpool::scale(a, attrs.alpha); break;
    case Op::kElementwiseMul: value = attnpool::elementwise_mul(a, *b); break;
    case Op::kRelu:
      value = a;
      for (auto& v : value.data()) v = std::max(v, 0.0);
      break;
    case Op::kSum: value = scalar(attnpool::sum(a)); break;
    case Op::kSoftmaxCrossEntropy:
      if (attrs.label >= a.size()) throw ValidationError("softmax_cross_entropy: label out of range");
      value = scalar(log_sum_exp(a.data()) - a[attrs.label]);
      break;
    case Op::kSigmoidCrossEntropy: {
      if (!attrs.targets || attrs.targets->size() != a.size()) {
        throw ShapeError("sigmoid_cross_entropy: targets must match logits " + a.shape().to_string());
      }
      double acc = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double z = a[i];
        acc += std::max(z, 0.0) - z * (*attrs.targets)[i] + std::log1p(std::exp(-std::abs(z)));
      }
      value = scalar(acc);
      break;
    }
    case Op::kSumOfSquares: {
      double acc = 0.0;
      for (double v : a.data()) acc += v * v;
      value = scalar(acc);
      break;
    }
    case Op::kCircularConvolve: value = circ_conv_rows(a, *b); break;
    case Op::kLeaf: break;
  }
  if (!value.all_finite()) throw NumericError(std::string(op_name(op)) + " produced a non-finite value");

  Node n;
  n.id = nodes_.size();
  n.op = op;
  n.parents.assign(inputs.begin(), inputs.end());
  n.value = std::move(value);
  n.attrs = std::move(attrs);
  nodes_.push_back(std::move(n));
  return nodes_.back().id;
}

void Tape::backward(NodeId loss) {
  if (loss >= nodes_.size()) throw ValidationError("loss node is not on the tape");
  if (nodes_[loss].value.size() != 1) {
    throw ShapeError("backward needs a scalar loss, got " + nodes_[loss].value.shape().to_string());
  }
  for (auto& n : nodes_) n.grad = Matrix(n.value.shape());
  nodes_[loss].grad[0] = 1.0;
  for (std::size_t i = loss + 1; i-- > 0;) {
    if (nodes_[i].op != Op::kLeaf) propagate(nodes_[i]);
  }
}

void Tape::propagate(const Node& n) {
  const Matrix& g = n.grad;
  auto parent = [&](std::size_t k) -> Node& { return nodes_[n.parents[k]]; };

  switch (n.op) {
    case Op::kMatmul: {
      Node& a = parent(0);
      Node& b = parent(1);
      // dA = G B^T, dB = A^T G
      accumulate(a.grad, attnpool::matmul(g, attnpool::transpose(b.value)));
      accumulate(b.grad, attnpool::matmul_tn(a.value, g));
      break;
    }
    case Op::kTranspose: accumulate(parent(0).grad, attnpool::transpose(g)); break;
    case Op::kAdd:
      accumulate(parent(0).grad, g);
      accumulate(parent(1).grad, g);
      break;
    case Op::kSubtract:
      accumulate(parent(0).grad, g);
      accumulate(parent(1).grad, attnpool::scale(g, -1.0));
      break;
    case Op::kScale: accumulate(parent(0).grad, attnpool::scale(g, n.attrs.alpha)); break;
    case Op::kElementwiseMul: {
      Node& a = parent(0);
      Node& b = parent(1);
      accumulate(a.grad, attnpool::elementwise_mul(g, b.value));
      accumulate(b.grad, attnpool::elementwise_mul(g, a.value));
      break;
    }
    case Op::kRelu: {
      Node& a = parent(0);
      // subgradient 0 at the kink
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (a.value[i] > 0.0) a.grad[i] += g[i];
      }
      break;
    }
    case Op::kSum: {
      Node& a = parent(0);
      for (auto& v : a.grad.data()) v += g[0];
      break;
    }
    case Op::kSoftmaxCrossEntropy: {
      Node& a = parent(0);
      const double lse = log_sum_exp(a.value.data());
      for (std::size_t i = 0; i < a.value.size(); ++i) {
        const double p = std::exp(a.value[i] - lse);
        a.grad[i] += g[0] * (p - (i == n.attrs.label ? 1.0 : 0.0));
      }
      break;
    }
    case Op::kSigmoidCrossEntropy: {
      Node& a = parent(0);
      for (std::size_t i = 0; i < a.value.size(); ++i) {
        const double z = a.value[i];
        const double p = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
        a.grad[i] += g[0] * (p - (*n.attrs.targets)[i]);
      }
      break;
    }
    case Op::kSumOfSquares: {
      Node& a = parent(0);
      for (std::size_t i = 0; i < a.value.size(); ++i) a.grad[i] += g[0] * 2.0 * a.value[i];
      break;
    }
    case Op::kCircularConvolve: {
      Node& u = parent(0);
      Node& v = parent(1);
      accumulate(u.grad, circ_corr_rows(g, v.value));
      accumulate(v.grad, circ_corr_rows(g, u.value));
      break;
    }
    case Op::kLeaf: break;
  }
}

// ---------------------------------------------------------------------------
// Var helpers

namespace {

Var unary(Op op, Var a, OpAttrs attrs = {}) {
  const NodeId in[] = {a.id};
  return {a.tape, a.tape->record(op, in, std::move(attrs))};
}

Var binary(Op op, Var a, Var b) {
  if (a.tape != b.tape) throw ValidationError(std::string(op_name(op)) + ": operands live on different tapes");
  const NodeId in[] = {a.id, b.id};
  return {a.tape, a.tape->record(op, in)};
}

}  // namespace

Var leaf(Tape& tape, Matrix value) { return {&tape, tape.leaf(std::move(value))}; }
Var matmul(Var a, Var b) { return binary(Op::kMatmul, a, b); }
Var transpose(Var a) { return unary(Op::kTranspose, a); }
Var add(Var a, Var b) { return binary(Op::kAdd, a, b); }
Var subtract(Var a, Var b) { return binary(Op::kSubtract, a, b); }
Var scale(Var a, double alpha) { return unary(Op::kScale, a, OpAttrs{.alpha = alpha, .label = 0, .targets = std::nullopt}); }
Var elementwise_mul(Var a, Var b) { return binary(Op::kElementwiseMul, a, b); }
Var relu(Var a) { return unary(Op::kRelu, a); }
Var sum(Var a) { return unary(Op::kSum, a); }
Var softmax_cross_entropy(Var logits, std::size_t label) {
  return unary(Op::kSoftmaxCrossEntropy, logits, OpAttrs{.alpha = 1.0, .label = label, .targets = std::nullopt});
}
Var sigmoid_cross_entropy(Var logits, const Matrix& targets) {
  return unary(Op::kSigmoidCrossEntropy, logits, OpAttrs{.targets = targets});
}
Var sum_of_squares(Var a) { return unary(Op::kSumOfSquares, a); }
Var circular_convolve(Var u, Var v) { return binary(Op::kCircularConvolve, u, v); }

void backward(Var loss) { loss.tape->backward(loss.id); }

// ---------------------------------------------------------------------------
// Whole-function helpers

GradResult evaluate_with_grad(const ScalarGraph& f, std::span<const Matrix> params) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(leaf(tape, p));
  const Var loss = f(tape, vars);
  backward(loss);
  GradResult out;
  out.loss = loss.value()[0];
  for (const auto& v : vars) out.grads.push_back(v.grad());
  return out;
}

double evaluate(const ScalarGraph& f, std::span<const Matrix> params) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(leaf(tape, p));
  const Var loss = f(tape, vars);
  if (loss.value().size() != 1) throw ShapeError("scalar graph returned " + loss.value().shape().to_string());
  return loss.value()[0];
}

double finite_diff_check(const ScalarGraph& f, std::span<const Matrix> params, double step) {
  const GradResult analytic = evaluate_with_grad(f, params);
  std::vector<Matrix> work(params.begin(), params.end());
  double worst = 0.0;
  for (std::size_t p = 0; p < work.size(); ++p) {
    for (std::size_t i = 0; i < work[p].size(); ++i) {
      const double orig = work[p][i];
      work[p][i] = orig + step;
      const double up = evaluate(f, work);
      work[p][i] = orig - step;
      const double down = evaluate(f, work);
      work[p][i] = orig;
      const double numeric = (up - down) / (2.0 * step);
      worst = std::max(worst, std::abs(analytic.grads[p][i] - numeric) / (1.0 + std::abs(numeric)));
    }
  }
  return worst;
}

}  // namespace attnpool::ag
