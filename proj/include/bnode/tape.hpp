#ifndef BNODE_TAPE_HPP
#define BNODE_TAPE_HPP

#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

#include "bnode/common.hpp"

// Reverse-mode differentiation over vector-valued nodes.
//
// Each node stores a contiguous block of values in the tape's arena.
// Operations are recorded at the granularity of affine maps, elementwise
// activations and small reductions, so a neural-ODE rollout produces a
// tape whose length is O(n_steps * n_layers) rather than O(n_flops).

namespace bnode::ad {

class Tape;

/** Handle to a vector-valued node on a tape. */
class Var {
public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  Index size() const;
  Vector value() const;
  /** Value of a length-1 node. */
  double scalar() const;
  bool all_finite() const;

  /** Length-1 view of element i. */
  Var operator[](Index i) const;

private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /** Independent variable; gradients are accumulated for it. */
  Var variable(const Eigen::Ref<const Vector>& x);
  Var constant(const Eigen::Ref<const Vector>& x);
  Var constant(double c);

  Var add(const Var& a, const Var& b);
  Var sub(const Var& a, const Var& b);
  /** Elementwise product; a length-1 operand is broadcast. */
  Var mul(const Var& a, const Var& b);
  /** Elementwise quotient; a length-1 operand is broadcast. */
  Var div(const Var& a, const Var& b);
  Var neg(const Var& a);
  Var scale(const Var& a, double c);
  Var shift(const Var& a, double c);

  /**
   * y = W x + b where W (rows x x.size(), row-major) and b (rows) are
   * slices of `params` starting at the given offsets.
   */
  Var affine(const Var& params, Index w_offset, Index b_offset, Index rows,
             const Var& x);

  Var tanh(const Var& a);
  Var relu(const Var& a);
  Var exp(const Var& a);
  Var softplus(const Var& a);
  /** ln|a| elementwise. */
  Var log_abs(const Var& a);
  Var square(const Var& a);

  Var dot(const Var& a, const Var& b);
  Var sum(const Var& a);
  Var sum_squares(const Var& a);

  Var slice(const Var& a, Index offset, Index n);
  Var concat(std::span<const Var> parts);
  Var concat(std::initializer_list<Var> parts) {
    return concat(std::span<const Var>(parts.begin(), parts.size()));
  }

  /**
   * Scalar node f(x) whose value and gradient were computed elsewhere.
   * Lets an external log-density join a tape without re-recording it.
   */
  Var external(const Var& x, double value, const Eigen::Ref<const Vector>& grad);

  /** Reverse sweep seeded with d(output)/d(output) = 1; output must be scalar. */
  void backward(const Var& output);
  /** Adjoint of a node after backward(). */
  Vector gradient(const Var& v) const;

  void clear();
  std::size_t node_count() const { return nodes_.size(); }

  // Accessors used by Var.
  Index size_of(int id) const { return nodes_[id].n; }
  const double* data_of(int id) const { return val_.data() + nodes_[id].off; }

private:
  enum class Op : std::uint8_t {
    Leaf, Const, Add, Sub, Mul, Div, Neg, Scale, Shift, Affine, Tanh, Relu,
    Exp, Softplus, LogAbs, Square, Dot, Sum, SumSquares, Slice, Concat, External
  };

  struct Node {
    Op op;
    int a = -1;
    int b = -1;
    Index off = 0;
    Index n = 0;
    double c = 0.0;
    Index p0 = 0;  // op-specific: weight offset / slice offset / args start
    Index p1 = 0;  // op-specific: bias offset / args count / extra offset
  };

  Var push(Op op, int a, int b, Index n, double c = 0.0, Index p0 = 0, Index p1 = 0);
  Eigen::Map<Vector> val(int id) { return {val_.data() + nodes_[id].off, nodes_[id].n}; }
  Eigen::Map<Vector> adj(int id) { return {adj_.data() + nodes_[id].off, nodes_[id].n}; }
  void check_same(const Var& a, const Var& b) const;
  void check_broadcast(const Var& a, const Var& b) const;

  std::vector<Node> nodes_;
  std::vector<double> val_;
  std::vector<double> adj_;
  std::vector<int> args_;
  std::vector<double> extra_;
};

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);
Var operator*(double c, const Var& a);
Var operator*(const Var& a, double c);
Var operator+(const Var& a, double c);
Var operator+(double c, const Var& a);
Var operator-(const Var& a, double c);
Var operator-(double c, const Var& a);

inline Var tanh(const Var& a) { return a.tape().tanh(a); }
inline Var exp(const Var& a) { return a.tape().exp(a); }
inline Var softplus(const Var& a) { return a.tape().softplus(a); }
inline Var log_abs(const Var& a) { return a.tape().log_abs(a); }
inline Var dot(const Var& a, const Var& b) { return a.tape().dot(a, b); }
inline Var sum(const Var& a) { return a.tape().sum(a); }
inline Var sum_squares(const Var& a) { return a.tape().sum_squares(a); }

}  // namespace bnode::ad

namespace bnode {

// Helpers so vector-field code can be written once for plain vectors and
// for tape variables.
inline double component(const Vector& u, Index i) { return u[i]; }
inline ad::Var component(const ad::Var& u, Index i) { return u[i]; }

inline Vector pack(std::initializer_list<double> xs) {
  Vector out(static_cast<Index>(xs.size()));
  Index i = 0;
  for (double x : xs) out[i++] = x;
  return out;
}
inline ad::Var pack(std::initializer_list<ad::Var> xs) {
  return xs.begin()->tape().concat(xs);
}

inline bool all_finite(const Vector& v) { return v.allFinite(); }
inline bool all_finite(const ad::Var& v) { return v.all_finite(); }

}  // namespace bnode

#endif  // BNODE_TAPE_HPP
