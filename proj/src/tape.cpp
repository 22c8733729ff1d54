#include "bnode/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace bnode::ad {

namespace {

using RowMajorMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

double softplus_scalar(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Index Var::size() const { return tape_->size_of(id_); }

Vector Var::value() const {
  return Eigen::Map<const Vector>(tape_->data_of(id_), size());
}

double Var::scalar() const {
  if (size() != 1) throw DimMismatch("scalar() on a node of length " + std::to_string(size()));
  return *tape_->data_of(id_);
}

bool Var::all_finite() const {
  const double* p = tape_->data_of(id_);
  return std::all_of(p, p + size(), [](double x) { return std::isfinite(x); });
}

Var Var::operator[](Index i) const { return tape_->slice(*this, i, 1); }

Var Tape::push(Op op, int a, int b, Index n, double c, Index p0, Index p1) {
  Node node;
  node.op = op;
  node.a = a;
  node.b = b;
  node.off = static_cast<Index>(val_.size());
  node.n = n;
  node.c = c;
  node.p0 = p0;
  node.p1 = p1;
  nodes_.push_back(node);
  val_.resize(val_.size() + static_cast<std::size_t>(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::check_same(const Var& a, const Var& b) const {
  if (size_of(a.id()) != size_of(b.id()))
    throw DimMismatch("tape operands differ in length: " + std::to_string(size_of(a.id())) +
                      " vs " + std::to_string(size_of(b.id())));
}

void Tape::check_broadcast(const Var& a, const Var& b) const {
  const Index na = size_of(a.id()), nb = size_of(b.id());
  if (na != nb && na != 1 && nb != 1)
    throw DimMismatch("tape operands cannot broadcast: " + std::to_string(na) + " vs " +
                      std::to_string(nb));
}

Var Tape::variable(const Eigen::Ref<const Vector>& x) {
  Var v = push(Op::Leaf, -1, -1, x.size());
  val(v.id()) = x;
  return v;
}

Var Tape::constant(const Eigen::Ref<const Vector>& x) {
  Var v = push(Op::Const, -1, -1, x.size());
  val(v.id()) = x;
  return v;
}

Var Tape::constant(double c) {
  Var v = push(Op::Const, -1, -1, 1);
  val(v.id())[0] = c;
  return v;
}

Var Tape::add(const Var& a, const Var& b) {
  check_same(a, b);
  Var v = push(Op::Add, a.id(), b.id(), size_of(a.id()));
  val(v.id()) = val(a.id()) + val(b.id());
  return v;
}

Var Tape::sub(const Var& a, const Var& b) {
  check_same(a, b);
  Var v = push(Op::Sub, a.id(), b.id(), size_of(a.id()));
  val(v.id()) = val(a.id()) - val(b.id());
  return v;
}

Var Tape::mul(const Var& a, const Var& b) {
  check_broadcast(a, b);
  const Index na = size_of(a.id()), nb = size_of(b.id());
  Var v = push(Op::Mul, a.id(), b.id(), std::max(na, nb));
  if (na == nb)
    val(v.id()) = val(a.id()).cwiseProduct(val(b.id()));
  else if (na == 1)
    val(v.id()) = val(a.id())[0] * val(b.id());
  else
    val(v.id()) = val(a.id()) * val(b.id())[0];
  return v;
}

Var Tape::div(const Var& a, const Var& b) {
  check_broadcast(a, b);
  const Index na = size_of(a.id()), nb = size_of(b.id());
  Var v = push(Op::Div, a.id(), b.id(), std::max(na, nb));
  if (na == nb)
    val(v.id()) = val(a.id()).cwiseQuotient(val(b.id()));
  else if (na == 1)
    val(v.id()) = val(a.id())[0] * val(b.id()).cwiseInverse();
  else
    val(v.id()) = val(a.id()) / val(b.id())[0];
  return v;
}

Var Tape::neg(const Var& a) {
  Var v = push(Op::Neg, a.id(), -1, size_of(a.id()));
  val(v.id()) = -val(a.id());
  return v;
}

Var Tape::scale(const Var& a, double c) {
  Var v = push(Op::Scale, a.id(), -1, size_of(a.id()), c);
  val(v.id()) = c * val(a.id());
  return v;
}

Var Tape::shift(const Var& a, double c) {
  Var v = push(Op::Shift, a.id(), -1, size_of(a.id()), c);
  val(v.id()) = val(a.id()).array() + c;
  return v;
}

Var Tape::affine(const Var& params, Index w_offset, Index b_offset, Index rows, const Var& x) {
  const Index cols = size_of(x.id());
  if (w_offset + rows * cols > size_of(params.id()) || b_offset + rows > size_of(params.id()))
    throw DimMismatch("affine slice exceeds parameter vector");
  Var v = push(Op::Affine, params.id(), x.id(), rows, 0.0, w_offset, b_offset);
  const double* p = val_.data() + nodes_[params.id()].off;
  RowMajorMap w(p + w_offset, rows, cols);
  Eigen::Map<const Vector> bias(p + b_offset, rows);
  val(v.id()).noalias() = w * val(x.id());
  val(v.id()) += bias;
  return v;
}

Var Tape::tanh(const Var& a) {
  Var v = push(Op::Tanh, a.id(), -1, size_of(a.id()));
  val(v.id()) = val(a.id()).array().tanh();
  return v;
}

Var Tape::relu(const Var& a) {
  Var v = push(Op::Relu, a.id(), -1, size_of(a.id()));
  val(v.id()) = val(a.id()).cwiseMax(0.0);
  return v;
}

Var Tape::exp(const Var& a) {
  Var v = push(Op::Exp, a.id(), -1, size_of(a.id()));
  val(v.id()) = val(a.id()).array().exp();
  return v;
}

Var Tape::softplus(const Var& a) {
  Var v = push(Op::Softplus, a.id(), -1, size_of(a.id()));
  val(v.id()) = val(a.id()).unaryExpr(&softplus_scalar);
  return v;
}

Var Tape::log_abs(const Var& a) {
  Var v = push(Op::LogAbs, a.id(), -1, size_of(a.id()));
  val(v.id()) = val(a.id()).array().abs().log();
  return v;
}

Var Tape::square(const Var& a) {
  Var v = push(Op::Square, a.id(), -1, size_of(a.id()));
  val(v.id()) = val(a.id()).array().square();
  return v;
}

Var Tape::dot(const Var& a, const Var& b) {
  check_same(a, b);
  Var v = push(Op::Dot, a.id(), b.id(), 1);
  val(v.id())[0] = val(a.id()).dot(val(b.id()));
  return v;
}

Var Tape::sum(const Var& a) {
  Var v = push(Op::Sum, a.id(), -1, 1);
  val(v.id())[0] = val(a.id()).sum();
  return v;
}

Var Tape::sum_squares(const Var& a) {
  Var v = push(Op::SumSquares, a.id(), -1, 1);
  val(v.id())[0] = val(a.id()).squaredNorm();
  return v;
}

Var Tape::slice(const Var& a, Index offset, Index n) {
  if (offset < 0 || n < 0 || offset + n > size_of(a.id()))
    throw DimMismatch("slice out of range");
  Var v = push(Op::Slice, a.id(), -1, n, 0.0, offset);
  val(v.id()) = val(a.id()).segment(offset, n);
  return v;
}

Var Tape::concat(std::span<const Var> parts) {
  Index n = 0;
  for (const Var& p : parts) n += size_of(p.id());
  const auto start = static_cast<Index>(args_.size());
  for (const Var& p : parts) args_.push_back(p.id());
  Var v = push(Op::Concat, -1, -1, n, 0.0, start, static_cast<Index>(parts.size()));
  Index pos = 0;
  for (const Var& p : parts) {
    const Index m = size_of(p.id());
    val(v.id()).segment(pos, m) = val(p.id());
    pos += m;
  }
  return v;
}

Var Tape::external(const Var& x, double value, const Eigen::Ref<const Vector>& grad) {
  if (grad.size() != size_of(x.id())) throw DimMismatch("external gradient length mismatch");
  const auto start = static_cast<Index>(extra_.size());
  extra_.insert(extra_.end(), grad.data(), grad.data() + grad.size());
  Var v = push(Op::External, x.id(), -1, 1, 0.0, start);
  val(v.id())[0] = value;
  return v;
}

void Tape::backward(const Var& output) {
  if (size_of(output.id()) != 1) throw DimMismatch("backward() needs a scalar output");
  adj_.assign(val_.size(), 0.0);
  adj_[static_cast<std::size_t>(nodes_[output.id()].off)] = 1.0;

  for (int id = output.id(); id >= 0; --id) {
    const Node& node = nodes_[id];
    auto g = adj(id);
    switch (node.op) {
      case Op::Leaf:
      case Op::Const:
        break;
      case Op::Add:
        adj(node.a) += g;
        adj(node.b) += g;
        break;
      case Op::Sub:
        adj(node.a) += g;
        adj(node.b) -= g;
        break;
      case Op::Mul: {
        const Index na = nodes_[node.a].n, nb = nodes_[node.b].n;
        if (na == nb) {
          adj(node.a) += g.cwiseProduct(val(node.b));
          adj(node.b) += g.cwiseProduct(val(node.a));
        } else if (na == 1) {
          adj(node.a)[0] += g.dot(val(node.b));
          adj(node.b) += val(node.a)[0] * g;
        } else {
          adj(node.a) += val(node.b)[0] * g;
          adj(node.b)[0] += g.dot(val(node.a));
        }
        break;
      }
      case Op::Div: {
        const Index na = nodes_[node.a].n, nb = nodes_[node.b].n;
        auto y = val(id);
        if (na == nb) {
          adj(node.a) += g.cwiseQuotient(val(node.b));
          adj(node.b) -= g.cwiseProduct(y).cwiseQuotient(val(node.b));
        } else if (na == 1) {
          adj(node.a)[0] += g.cwiseQuotient(val(node.b)).sum();
          adj(node.b) -= g.cwiseProduct(y).cwiseQuotient(val(node.b));
        } else {
          const double bv = val(node.b)[0];
          adj(node.a) += g / bv;
          adj(node.b)[0] -= g.dot(y) / bv;
        }
        break;
      }
      case Op::Neg:
        adj(node.a) -= g;
        break;
      case Op::Scale:
        adj(node.a) += node.c * g;
        break;
      case Op::Shift:
        adj(node.a) += g;
        break;
      case Op::Affine: {
        const Index rows = node.n;
        const Index cols = nodes_[node.b].n;
        const double* p = val_.data() + nodes_[node.a].off;
        RowMajorMap w(p + node.p0, rows, cols);
        adj(node.b).noalias() += w.transpose() * g;
        double* gp = adj_.data() + nodes_[node.a].off;
        Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gw(
            gp + node.p0, rows, cols);
        gw.noalias() += g * val(node.b).transpose();
        Eigen::Map<Vector>(gp + node.p1, rows) += g;
        break;
      }
      case Op::Tanh:
        adj(node.a).array() += g.array() * (1.0 - val(id).array().square());
        break;
      case Op::Relu:
        adj(node.a).array() += g.array() * (val(node.a).array() > 0.0).cast<double>();
        break;
      case Op::Exp:
        adj(node.a) += g.cwiseProduct(val(id));
        break;
      case Op::Softplus:
        adj(node.a) += g.cwiseProduct(val(node.a).unaryExpr(&sigmoid));
        break;
      case Op::LogAbs:
        adj(node.a) += g.cwiseQuotient(val(node.a));
        break;
      case Op::Square:
        adj(node.a) += 2.0 * g.cwiseProduct(val(node.a));
        break;
      case Op::Dot:
        adj(node.a) += g[0] * val(node.b);
        adj(node.b) += g[0] * val(node.a);
        break;
      case Op::Sum:
        adj(node.a).array() += g[0];
        break;
      case Op::SumSquares:
        adj(node.a) += (2.0 * g[0]) * val(node.a);
        break;
      case Op::Slice:
        adj(node.a).segment(node.p0, node.n) += g;
        break;
      case Op::Concat: {
        Index pos = 0;
        for (Index k = 0; k < node.p1; ++k) {
          const int part = args_[static_cast<std::size_t>(node.p0 + k)];
          const Index m = nodes_[part].n;
          adj(part) += g.segment(pos, m);
          pos += m;
        }
        break;
      }
      case Op::External: {
        Eigen::Map<const Vector> eg(extra_.data() + node.p0, nodes_[node.a].n);
        adj(node.a) += g[0] * eg;
        break;
      }
    }
  }
}

Vector Tape::gradient(const Var& v) const {
  if (adj_.size() < val_.size()) throw Error("gradient() requested before backward()");
  const Node& node = nodes_[v.id()];
  return Eigen::Map<const Vector>(adj_.data() + node.off, node.n);
}

void Tape::clear() {
  nodes_.clear();
  val_.clear();
  adj_.clear();
  args_.clear();
  extra_.clear();
}

Var operator+(const Var& a, const Var& b) { return a.tape().add(a, b); }
Var operator-(const Var& a, const Var& b) { return a.tape().sub(a, b); }
Var operator*(const Var& a, const Var& b) { return a.tape().mul(a, b); }
Var operator/(const Var& a, const Var& b) { return a.tape().div(a, b); }
Var operator-(const Var& a) { return a.tape().neg(a); }
Var operator*(double c, const Var& a) { return a.tape().scale(a, c); }
Var operator*(const Var& a, double c) { return a.tape().scale(a, c); }
Var operator+(const Var& a, double c) { return a.tape().shift(a, c); }
Var operator+(double c, const Var& a) { return a.tape().shift(a, c); }
Var operator-(const Var& a, double c) { return a.tape().shift(a, -c); }
Var operator-(double c, const Var& a) { return a.tape().shift(a.tape().neg(a), c); }

}  // namespace bnode::ad

#include "bnode/gradient.hpp"

namespace bnode {

GradRecord grad_through_integrator(const TapeObjective& objective, const Vector& params) {
  ad::Tape tape;
  const ad::Var x = tape.variable(params);
  const ad::Var out = objective(tape, x);
  GradRecord rec;
  rec.value = out.scalar();
  if (!std::isfinite(rec.value)) throw NonFiniteState("objective evaluated to a non-finite value", -1);
  tape.backward(out);
  rec.grad = tape.gradient(x);
  if (!rec.grad.allFinite()) throw NonFiniteGradient("non-finite gradient");
  return rec;
}

}  // namespace bnode
