#pragma once

#include <Eigen/Dense>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "artemis/core/error.hpp"
#include "artemis/numcore/mlp.hpp"

namespace artemis::numcore {

/// Handle to a node on a Tape.
struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-accumulation tape over matrix-valued nodes.
///
/// Every node is a dense matrix (vectors are 1 x d rows). Nodes are appended
/// in evaluation order, so the node list is already topologically sorted.
/// Forward values are computed by a single `evaluate` routine that `replay`
/// also uses, which makes replays bit-identical to the original pass.
class Tape {
 public:
  enum class Op : std::uint8_t {
    Leaf,
    Const,
    MatMul,      // a * b
    MatMulBT,    // a * b^T
    Add,
    Sub,
    Mul,         // elementwise
    Div,         // elementwise
    Scale,       // s * a
    AddScalar,   // a + s
    ScaleBy,     // a(1x1) * b
    AddRowVec,   // a + 1 * b, b is 1 x cols(a)
    MulRowVec,   // a .* (1 * b), b is 1 x cols(a)
    Tanh,
    Softplus,
    Square,
    Max0,
    Exp,
    Sin,
    Cos,
    Sum,         // -> 1x1
    RowSums,     // -> rows x 1
    ConcatCols,  // [a, b]
    SliceRows,   // a.middleRows(i0, i1)
    SliceCols,   // a.middleCols(i0, i1)
    TimeEmbed,   // a: 1xF frequencies, b: n x 1 times -> n x 2F, interleaved sin/cos
    UnitLowerMat,    // a: 1 x d(d-1)/2 strictly-lower entries -> d x d, unit diagonal
    UnitLowerMul,    // a: packed L, b: 1 x d row v -> ((I + L) v^T)^T
    UnitLowerSolve,  // a: packed L, b: 1 x d row r -> ((I + L)^{-1} r^T)^T
  };

  struct Node {
    Op op = Op::Const;
    std::int32_t a = -1;
    std::int32_t b = -1;
    double s = 0.0;
    Eigen::Index i0 = 0;
    Eigen::Index i1 = 0;
    Mat value;
    Mat grad;
  };

  Tape() { nodes_.reserve(256); }

  Var leaf(Mat value) { return push_source(Op::Leaf, std::move(value)); }
  Var constant(Mat value) { return push_source(Op::Const, std::move(value)); }
  Var scalar_constant(double v) { return constant(Mat::Constant(1, 1, v)); }

  Var matmul(Var a, Var b) {
    check(cols(a) == rows(b), "matmul: inner dimensions differ");
    return push(Op::MatMul, a, b);
  }
  Var matmul_bt(Var a, Var b) {
    check(cols(a) == cols(b), "matmul_bt: column counts differ");
    return push(Op::MatMulBT, a, b);
  }
  Var add(Var a, Var b) { same_shape(a, b, "add"); return push(Op::Add, a, b); }
  Var sub(Var a, Var b) { same_shape(a, b, "sub"); return push(Op::Sub, a, b); }
  Var mul(Var a, Var b) { same_shape(a, b, "mul"); return push(Op::Mul, a, b); }
  Var div(Var a, Var b) { same_shape(a, b, "div"); return push(Op::Div, a, b); }
  Var scale(Var a, double s) { return push(Op::Scale, a, {}, s); }
  Var add_scalar(Var a, double s) { return push(Op::AddScalar, a, {}, s); }
  Var scale_by(Var scalar, Var b) {
    check(rows(scalar) == 1 && cols(scalar) == 1, "scale_by: first operand must be 1x1");
    return push(Op::ScaleBy, scalar, b);
  }
  Var add_row_vec(Var a, Var row) {
    check(rows(row) == 1 && cols(row) == cols(a), "add_row_vec: row shape mismatch");
    return push(Op::AddRowVec, a, row);
  }
  Var mul_row_vec(Var a, Var row) {
    check(rows(row) == 1 && cols(row) == cols(a), "mul_row_vec: row shape mismatch");
    return push(Op::MulRowVec, a, row);
  }
  Var tanh(Var a) { return push(Op::Tanh, a); }
  Var softplus(Var a) { return push(Op::Softplus, a); }
  Var square(Var a) { return push(Op::Square, a); }
  Var max0(Var a) { return push(Op::Max0, a); }
  Var exp(Var a) { return push(Op::Exp, a); }
  Var sin(Var a) { return push(Op::Sin, a); }
  Var cos(Var a) { return push(Op::Cos, a); }
  Var sum(Var a) { return push(Op::Sum, a); }
  Var row_sums(Var a) { return push(Op::RowSums, a); }
  Var concat_cols(Var a, Var b) {
    check(rows(a) == rows(b), "concat_cols: row counts differ");
    return push(Op::ConcatCols, a, b);
  }
  Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
    check(start >= 0 && count >= 1 && start + count <= rows(a), "slice_rows: out of range");
    return push(Op::SliceRows, a, {}, 0.0, start, count);
  }
  Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
    check(start >= 0 && count >= 1 && start + count <= cols(a), "slice_cols: out of range");
    return push(Op::SliceCols, a, {}, 0.0, start, count);
  }
  Var time_embed(Var freqs, Var times) {
    check(rows(freqs) == 1 && cols(times) == 1, "time_embed: expects 1xF frequencies and nx1 times");
    return push(Op::TimeEmbed, freqs, times);
  }
  Var unit_lower_mat(Var packed, Eigen::Index d) {
    check(rows(packed) == 1 && cols(packed) == d * (d - 1) / 2, "unit_lower_mat: packed size mismatch");
    return push(Op::UnitLowerMat, packed, {}, 0.0, d);
  }
  Var unit_lower_mul(Var packed, Var v) {
    const Eigen::Index d = cols(v);
    check(rows(v) == 1 && rows(packed) == 1 && cols(packed) == d * (d - 1) / 2, "unit_lower_mul: shape mismatch");
    return push(Op::UnitLowerMul, packed, v, 0.0, d);
  }
  Var unit_lower_solve(Var packed, Var r) {
    const Eigen::Index d = cols(r);
    check(rows(r) == 1 && rows(packed) == 1 && cols(packed) == d * (d - 1) / 2, "unit_lower_solve: shape mismatch");
    return push(Op::UnitLowerSolve, packed, r, 0.0, d);
  }

  const Mat& value(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).value; }
  double scalar(Var v) const { return value(v)(0, 0); }
  const Mat& grad(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).grad; }
  std::size_t size() const { return nodes_.size(); }
  const Node& node(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)); }

  /// Reverse accumulation from a scalar node. Gradient slots of every node
  /// reachable from `loss` hold d loss / d node afterwards.
  void backward(Var loss) {
    check(rows(loss) == 1 && cols(loss) == 1, "backward: loss node must be scalar");
    for (auto& n : nodes_) n.grad.setZero(n.value.rows(), n.value.cols());
    nodes_[loss.id].grad(0, 0) = 1.0;
    for (std::int32_t i = loss.id; i >= 0; --i) propagate(nodes_[static_cast<std::size_t>(i)]);
  }

  /// Recompute every node from leaves and constants and report whether the
  /// result reproduces the recorded forward values bit-for-bit.
  bool replay_matches() const {
    for (const auto& n : nodes_) {
      if (n.op == Op::Leaf || n.op == Op::Const) continue;
      const Mat again = evaluate(n);
      if (again.rows() != n.value.rows() || again.cols() != n.value.cols()) return false;
      for (Eigen::Index k = 0; k < again.size(); ++k)
        if (std::bit_cast<std::uint64_t>(again.data()[k]) != std::bit_cast<std::uint64_t>(n.value.data()[k]))
          return false;
    }
    return true;
  }

 private:
  std::vector<Node> nodes_;

  static void check(bool cond, const char* msg) {
    if (!cond) throw ContractViolation(std::string("Tape::") + msg);
  }
  Eigen::Index rows(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).value.rows(); }
  Eigen::Index cols(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).value.cols(); }
  void same_shape(Var a, Var b, const char* what) const {
    if (rows(a) != rows(b) || cols(a) != cols(b)) throw ContractViolation(std::string("Tape::") + what + ": shape mismatch");
  }

  Var push_source(Op op, Mat value) {
    Node n;
    n.op = op;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  Var push(Op op, Var a, Var b = {}, double s = 0.0, Eigen::Index i0 = 0, Eigen::Index i1 = 0) {
    Node n;
    n.op = op;
    n.a = a.id;
    n.b = b.id;
    n.s = s;
    n.i0 = i0;
    n.i1 = i1;
    n.value = evaluate(n);
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  static double strict_lower(const Mat& packed, Eigen::Index i, Eigen::Index j) {
    return packed(0, i * (i - 1) / 2 + j);
  }

  Mat evaluate(const Node& n) const {
    const auto A = [&]() -> const Mat& { return nodes_[static_cast<std::size_t>(n.a)].value; };
    const auto B = [&]() -> const Mat& { return nodes_[static_cast<std::size_t>(n.b)].value; };
    switch (n.op) {
      case Op::Leaf:
      case Op::Const:
        return n.value;
      case Op::MatMul:
        return A() * B();
      case Op::MatMulBT:
        return A() * B().transpose();
      case Op::Add:
        return A() + B();
      case Op::Sub:
        return A() - B();
      case Op::Mul:
        return A().cwiseProduct(B());
      case Op::Div:
        return A().cwiseQuotient(B());
      case Op::Scale:
        return n.s * A();
      case Op::AddScalar:
        return (A().array() + n.s).matrix();
      case Op::ScaleBy:
        return A()(0, 0) * B();
      case Op::AddRowVec:
        return A().rowwise() + B().row(0);
      case Op::MulRowVec:
        return (A().array().rowwise() * B().row(0).array()).matrix();
      case Op::Tanh:
        return A().array().tanh().matrix();
      case Op::Softplus:
        return A().unaryExpr([](double x) { return numcore::softplus(x); });
      case Op::Square:
        return A().array().square().matrix();
      case Op::Max0:
        return A().cwiseMax(0.0);
      case Op::Exp:
        return A().array().exp().matrix();
      case Op::Sin:
        return A().array().sin().matrix();
      case Op::Cos:
        return A().array().cos().matrix();
      case Op::Sum:
        return Mat::Constant(1, 1, A().sum());
      case Op::RowSums:
        return A().rowwise().sum();
      case Op::ConcatCols: {
        Mat out(A().rows(), A().cols() + B().cols());
        out << A(), B();
        return out;
      }
      case Op::SliceRows:
        return A().middleRows(n.i0, n.i1);
      case Op::SliceCols:
        return A().middleCols(n.i0, n.i1);
      case Op::TimeEmbed: {
        const Mat& f = A();
        const Mat& t = B();
        Mat out(t.rows(), 2 * f.cols());
        for (Eigen::Index r = 0; r < t.rows(); ++r)
          for (Eigen::Index k = 0; k < f.cols(); ++k) {
            const double arg = 2.0 * std::numbers::pi * f(0, k) * t(r, 0);
            out(r, 2 * k) = std::sin(arg);
            out(r, 2 * k + 1) = std::cos(arg);
          }
        return out;
      }
      case Op::UnitLowerMat: {
        const Eigen::Index d = n.i0;
        Mat out = Mat::Identity(d, d);
        for (Eigen::Index i = 1; i < d; ++i)
          for (Eigen::Index j = 0; j < i; ++j) out(i, j) = strict_lower(A(), i, j);
        return out;
      }
      case Op::UnitLowerMul: {
        const Eigen::Index d = n.i0;
        const Mat& v = B();
        Mat out = v;
        for (Eigen::Index i = 1; i < d; ++i) {
          double acc = out(0, i);
          for (Eigen::Index j = 0; j < i; ++j) acc += strict_lower(A(), i, j) * v(0, j);
          out(0, i) = acc;
        }
        return out;
      }
      case Op::UnitLowerSolve: {
        const Eigen::Index d = n.i0;
        Mat y = B();
        for (Eigen::Index i = 1; i < d; ++i) {
          double acc = y(0, i);
          for (Eigen::Index j = 0; j < i; ++j) acc -= strict_lower(A(), i, j) * y(0, j);
          y(0, i) = acc;
        }
        return y;
      }
    }
    throw ContractViolation("Tape: unknown op");
  }

  void propagate(Node& n) {
    if (n.op == Op::Leaf || n.op == Op::Const) return;
    const Mat& g = n.grad;
    if (g.isZero(0.0)) return;
    Node* na = n.a >= 0 ? &nodes_[static_cast<std::size_t>(n.a)] : nullptr;
    Node* nb = n.b >= 0 ? &nodes_[static_cast<std::size_t>(n.b)] : nullptr;
    switch (n.op) {
      case Op::Leaf:
      case Op::Const:
        return;
      case Op::MatMul:
        na->grad.noalias() += g * nb->value.transpose();
        nb->grad.noalias() += na->value.transpose() * g;
        return;
      case Op::MatMulBT:
        na->grad.noalias() += g * nb->value;
        nb->grad.noalias() += g.transpose() * na->value;
        return;
      case Op::Add:
        na->grad += g;
        nb->grad += g;
        return;
      case Op::Sub:
        na->grad += g;
        nb->grad -= g;
        return;
      case Op::Mul:
        na->grad += g.cwiseProduct(nb->value);
        nb->grad += g.cwiseProduct(na->value);
        return;
      case Op::Div:
        na->grad += g.cwiseQuotient(nb->value);
        nb->grad -= g.cwiseProduct(n.value).cwiseQuotient(nb->value);
        return;
      case Op::Scale:
        na->grad += n.s * g;
        return;
      case Op::AddScalar:
        na->grad += g;
        return;
      case Op::ScaleBy:
        na->grad(0, 0) += g.cwiseProduct(nb->value).sum();
        nb->grad += na->value(0, 0) * g;
        return;
      case Op::AddRowVec:
        na->grad += g;
        nb->grad += g.colwise().sum();
        return;
      case Op::MulRowVec:
        na->grad += (g.array().rowwise() * nb->value.row(0).array()).matrix();
        nb->grad += g.cwiseProduct(na->value).colwise().sum();
        return;
      case Op::Tanh:
        na->grad += (g.array() * (1.0 - n.value.array().square())).matrix();
        return;
      case Op::Softplus:
        na->grad += g.cwiseProduct(na->value.unaryExpr([](double x) { return sigmoid(x); }));
        return;
      case Op::Square:
        na->grad += 2.0 * g.cwiseProduct(na->value);
        return;
      case Op::Max0:
        // Subgradient 0 at the kink.
        na->grad += g.cwiseProduct(na->value.unaryExpr([](double x) { return x > 0.0 ? 1.0 : 0.0; }));
        return;
      case Op::Exp:
        na->grad += g.cwiseProduct(n.value);
        return;
      case Op::Sin:
        na->grad += (g.array() * na->value.array().cos()).matrix();
        return;
      case Op::Cos:
        na->grad -= (g.array() * na->value.array().sin()).matrix();
        return;
      case Op::Sum:
        na->grad.array() += g(0, 0);
        return;
      case Op::RowSums:
        na->grad.colwise() += g.col(0);
        return;
      case Op::ConcatCols:
        na->grad += g.leftCols(na->value.cols());
        nb->grad += g.rightCols(nb->value.cols());
        return;
      case Op::SliceRows:
        na->grad.middleRows(n.i0, n.i1) += g;
        return;
      case Op::SliceCols:
        na->grad.middleCols(n.i0, n.i1) += g;
        return;
      case Op::TimeEmbed: {
        const Mat& f = na->value;
        const Mat& t = nb->value;
        for (Eigen::Index r = 0; r < t.rows(); ++r)
          for (Eigen::Index k = 0; k < f.cols(); ++k) {
            const double w = 2.0 * std::numbers::pi * t(r, 0);
            // d sin(w f)/df = w cos, d cos(w f)/df = -w sin
            na->grad(0, k) += w * (g(r, 2 * k) * n.value(r, 2 * k + 1) - g(r, 2 * k + 1) * n.value(r, 2 * k));
            nb->grad(r, 0) += 2.0 * std::numbers::pi * f(0, k) *
                              (g(r, 2 * k) * n.value(r, 2 * k + 1) - g(r, 2 * k + 1) * n.value(r, 2 * k));
          }
        return;
      }
      case Op::UnitLowerMat: {
        const Eigen::Index d = n.i0;
        for (Eigen::Index i = 1; i < d; ++i)
          for (Eigen::Index j = 0; j < i; ++j) na->grad(0, i * (i - 1) / 2 + j) += g(i, j);
        return;
      }
      case Op::UnitLowerMul: {
        // y_i = v_i + sum_{j<i} L_ij v_j
        const Eigen::Index d = n.i0;
        const Mat& v = nb->value;
        for (Eigen::Index i = 0; i < d; ++i) {
          nb->grad(0, i) += g(0, i);
          for (Eigen::Index j = 0; j < i; ++j) {
            nb->grad(0, j) += strict_lower(na->value, i, j) * g(0, i);
            na->grad(0, i * (i - 1) / 2 + j) += g(0, i) * v(0, j);
          }
        }
        return;
      }
      case Op::UnitLowerSolve: {
        // y = (I+L)^{-1} r  =>  rbar = (I+L)^{-T} ybar, Lbar_ij = -rbar_i y_j
        const Eigen::Index d = n.i0;
        const Mat& y = n.value;
        Mat rbar = g;
        for (Eigen::Index i = d - 1; i >= 0; --i) {
          double acc = rbar(0, i);
          for (Eigen::Index k = i + 1; k < d; ++k) acc -= strict_lower(na->value, k, i) * rbar(0, k);
          rbar(0, i) = acc;
        }
        nb->grad += rbar;
        for (Eigen::Index i = 1; i < d; ++i)
          for (Eigen::Index j = 0; j < i; ++j) na->grad(0, i * (i - 1) / 2 + j) -= rbar(0, i) * y(0, j);
        return;
      }
    }
  }
};

/// Tape handles for the four blocks of an Mlp1h.
struct MlpVars {
  Var W1, b1, W2, b2;  // b1, b2 as 1 x h and 1 x dout rows
};

inline MlpVars mlp_leaves(Tape& tape, const Mlp1h& net) {
  return {tape.leaf(net.W1), tape.leaf(net.b1.transpose()), tape.leaf(net.W2), tape.leaf(net.b2.transpose())};
}

/// Row-batched network on the tape: input n x din, output n x dout.
inline Var mlp_on_tape(Tape& tape, const MlpVars& net, Var input) {
  const Var pre = tape.add_row_vec(tape.matmul_bt(input, net.W1), net.b1);
  const Var h = tape.tanh(pre);
  return tape.add_row_vec(tape.matmul_bt(h, net.W2), net.b2);
}

}  // namespace artemis::numcore
