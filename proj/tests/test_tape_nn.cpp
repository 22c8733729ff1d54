#include <gtest/gtest.h>

#include <cmath>

#include "bnode/gradient.hpp"
#include "bnode/mlp.hpp"
#include "bnode/ode.hpp"
#include "bnode/posterior.hpp"
#include "support.hpp"

using namespace bnode;
using bnode::testing::fd_gradient;
using bnode::testing::random_vector;

namespace {

// Gradient of a tape objective against central differences of its value.
void expect_tape_gradient(const TapeObjective& f, const Vector& x, double tol = 1e-7) {
  const GradRecord rec = grad_through_integrator(f, x);
  auto value = [&](const Vector& p) {
    ad::Tape t;
    return f(t, t.variable(p)).scalar();
  };
  const Vector fd = fd_gradient(value, x, 1e-6);
  for (Index i = 0; i < x.size(); ++i)
    EXPECT_NEAR(rec.grad[i], fd[i], tol * std::max(1.0, std::abs(fd[i]))) << i;
}

}  // namespace

TEST(Tape, ElementwiseOpsGradients) {
  const Vector x = pack({0.3, -0.7, 1.1});
  expect_tape_gradient([](ad::Tape& t, const ad::Var& v) { return t.sum(t.tanh(v) * t.exp(v)); }, x);
  expect_tape_gradient([](ad::Tape& t, const ad::Var& v) { return t.sum(t.softplus(v) / (v + 3.0)); }, x);
  expect_tape_gradient([](ad::Tape& t, const ad::Var& v) { return t.sum(t.log_abs(v) - t.square(v)); }, x);
  expect_tape_gradient([](ad::Tape& t, const ad::Var& v) { return t.dot(v, t.relu(v)) + t.sum_squares(-v); }, x);
  expect_tape_gradient(
      [](ad::Tape& t, const ad::Var& v) {
        const ad::Var a = t.slice(v, 1, 2);
        return t.sum(t.concat({a, v[0] * a, 2.0 - v}));
      },
      x);
}

TEST(Tape, BroadcastAndAffine) {
  const Vector x = random_vector(2 * 3 + 2 + 3, 4);
  expect_tape_gradient(
      [](ad::Tape& t, const ad::Var& p) {
        const ad::Var in = t.slice(p, 8, 3);
        const ad::Var y = t.affine(p, 0, 6, 2, in);
        return t.sum_squares(y * in[0]);
      },
      x);
}

TEST(Tape, ExternalNodeChainsGradient) {
  const Vector x = pack({0.5, -1.0});
  expect_tape_gradient(
      [](ad::Tape& t, const ad::Var& v) {
        const ad::Var z = t.scale(v, 3.0);
        const Vector zv = z.value();
        return t.external(z, zv.squaredNorm(), 2.0 * zv) + t.sum(v);
      },
      x);
}

TEST(GradThroughIntegrator, QuadraticObjective) {
  const Vector p = pack({1.0, -2.0, 0.5});
  const GradRecord rec =
      grad_through_integrator([](ad::Tape& t, const ad::Var& v) { return t.sum_squares(v); }, p);
  EXPECT_DOUBLE_EQ(rec.value, 5.25);
  EXPECT_TRUE(rec.grad.isApprox(2.0 * p));
}

TEST(GradThroughIntegrator, SaveOnlyAtStartGivesZeroGradient) {
  const MlpSpec spec({2, 4, 2});
  const Vector p = init_params(spec, 3).values;
  const TimeGrid grid(0.0, 1.0, 10, {0.0});
  auto objective = [&](ad::Tape& t, const ad::Var& theta) {
    auto rhs = [&](double, const ad::Var& u) { return mlp_forward(spec, theta, u); };
    const auto states = integrate_states(rhs, t.constant(pack({1.0, 0.5})), grid);
    return t.sum_squares(states.front());
  };
  const GradRecord rec = grad_through_integrator(objective, p);
  EXPECT_DOUBLE_EQ(rec.value, 1.25);
  EXPECT_EQ(rec.grad, Vector::Zero(p.size()));
}

TEST(GradThroughIntegrator, NeuralOdeMatchesFiniteDifferences) {
  const MlpSpec spec({2, 6, 6, 2});
  const Vector p = init_params(spec, 8).values;
  const TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 12, 5);
  auto objective = [&](ad::Tape& t, const ad::Var& theta) {
    auto rhs = [&](double, const ad::Var& u) { return mlp_forward(spec, theta, u); };
    const auto states = integrate_states(rhs, t.constant(pack({2.0, 0.0})), grid);
    ad::Var total = t.constant(0.0);
    for (const ad::Var& s : states) total = total + t.sum_squares(s - t.constant(pack({1.0, -1.0})));
    return total;
  };
  const GradRecord rec = grad_through_integrator(objective, p);
  auto value = [&](const Vector& q) {
    ad::Tape t;
    return objective(t, t.variable(q)).scalar();
  };
  const Vector fd = fd_gradient(value, p, 1e-5);
  for (Index i = 0; i < p.size(); ++i)
    EXPECT_LT(std::abs(rec.grad[i] - fd[i]), 1e-5 * std::max(std::abs(fd[i]), 1e-3)) << i;
}

TEST(Mlp, ParamCounts) {
  EXPECT_EQ(MlpSpec({2, 5, 2}).param_count(), 27);
  Index oracle = 0;
  const std::vector<Index> w{2, 50, 50, 2};
  for (std::size_t l = 0; l + 1 < w.size(); ++l) oracle += w[l] * w[l + 1] + w[l + 1];
  EXPECT_EQ(oracle, 2802);
  EXPECT_EQ(MlpSpec(w).param_count(), oracle);
}

TEST(Mlp, InitIsSeededGlorotWithZeroBias) {
  const MlpSpec spec({3, 7, 2});
  const ParamVec a = init_params(spec, 5);
  const ParamVec b = init_params(spec, 5);
  EXPECT_EQ(a.values, b.values);
  EXPECT_NE(a.values, init_params(spec, 6).values);
  const auto layers = unflatten(a);
  for (const DenseLayer& l : layers) {
    const double limit = std::sqrt(6.0 / static_cast<double>(l.weight.rows() + l.weight.cols()));
    EXPECT_LE(l.weight.cwiseAbs().maxCoeff(), limit);
    EXPECT_EQ(l.bias, Vector::Zero(l.bias.size()));
  }
}

TEST(Mlp, ForwardExamples) {
  const MlpSpec spec({2, 4, 3});
  EXPECT_EQ(mlp_forward(spec, Vector::Zero(spec.param_count()), pack({1.0, 2.0})), Vector::Zero(3));

  const MlpSpec affine({1, 1});
  EXPECT_DOUBLE_EQ(mlp_forward(affine, pack({2.5, -0.5}), pack({3.0}))[0], 7.0);

  const MlpSpec one({1, 1, 1});
  EXPECT_NEAR(mlp_forward(one, pack({1.0, 0.0, 1.0, 0.0}), pack({0.5}))[0], 0.462117, 1e-6);

  EXPECT_THROW(mlp_forward(spec, Vector::Zero(spec.param_count()), pack({1.0})), DimMismatch);
}

TEST(Mlp, TapeForwardMatchesPlainForward) {
  const MlpSpec spec({2, 5, 5, 2}, Activation::Relu);
  const Vector p = init_params(spec, 12).values;
  const Vector x = pack({0.4, -0.9});
  ad::Tape t;
  const Vector via_tape = mlp_forward(spec, t.variable(p), t.constant(x)).value();
  EXPECT_TRUE(via_tape.isApprox(mlp_forward(spec, p, x), 1e-14));
}

TEST(Mlp, FlattenRoundTrip) {
  const MlpSpec spec({2, 3, 4, 2});
  const ParamVec p{random_vector(spec.param_count(), 9), spec};
  EXPECT_EQ(flatten(unflatten(p), spec).values, p.values);
}

TEST(Mlp, TanhHiddenActivationsBounded) {
  const MlpSpec spec({2, 8, 8, 2});
  const Vector p = random_vector(spec.param_count(), 10, 5.0);
  const auto trace = mlp_forward_trace(spec, p, pack({3.0, -4.0}));
  for (std::size_t l = 0; l + 1 < trace.size(); ++l) EXPECT_LE(trace[l].cwiseAbs().maxCoeff(), 1.0);
}

TEST(Mlp, SpecValidation) {
  EXPECT_THROW(MlpSpec({2}).validate(), ConfigError);
  EXPECT_THROW(MlpSpec({2, 0, 2}).validate(), ConfigError);
  EXPECT_THROW(parse_activation("sigmoid"), ConfigError);
}
