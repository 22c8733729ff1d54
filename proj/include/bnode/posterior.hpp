#ifndef BNODE_POSTERIOR_HPP
#define BNODE_POSTERIOR_HPP

#include <memory>
#include <variant>
#include <vector>

#include "bnode/common.hpp"
#include "bnode/gradient.hpp"
#include "bnode/mlp.hpp"
#include "bnode/ode.hpp"
#include "bnode/systems.hpp"
#include "bnode/tape.hpp"

namespace bnode {

/** Target density over a flat parameter vector, as seen by samplers. */
class LogDensity {
public:
  virtual ~LogDensity() = default;
  virtual Index dim() const = 0;
  /** log density up to a constant; -inf where undefined. */
  virtual double log_density(const Vector& theta) const = 0;
  /** Value and gradient; value -inf (and zero gradient) where undefined. */
  virtual GradRecord log_density_grad(const Vector& theta) const = 0;
};

/** Parametrized autonomous-or-not vector field du/dt = f_theta(t, u). */
class VectorField {
public:
  virtual ~VectorField() = default;
  virtual Index state_dim() const = 0;
  virtual Index param_dim() const = 0;
  virtual Vector eval(const Vector& theta, double t, const Vector& u) const = 0;
  virtual ad::Var eval(const ad::Var& theta, double t, const ad::Var& u) const = 0;
};

/** du/dt = MLP_theta(u). */
class NeuralField final : public VectorField {
public:
  explicit NeuralField(MlpSpec spec);
  Index state_dim() const override { return spec_.input_dim(); }
  Index param_dim() const override { return spec_.param_count(); }
  Vector eval(const Vector& theta, double, const Vector& u) const override {
    return mlp_forward(spec_, theta, u);
  }
  ad::Var eval(const ad::Var& theta, double, const ad::Var& u) const override {
    return mlp_forward(spec_, theta, u);
  }
  const MlpSpec& spec() const { return spec_; }

private:
  MlpSpec spec_;
};

/** -theta.theta */
struct QuadraticPrior {};

/** -||theta - mean||^2 / (2 sigma^2) */
struct GaussianPrior {
  Vector mean;
  double sigma = 1.0;
};

using Prior = std::variant<QuadraticPrior, GaussianPrior>;

struct PosteriorSpec {
  Trajectory data;
  std::shared_ptr<const VectorField> field;
  Prior prior = QuadraticPrior{};
  double likelihood_scale = 1.0;

  /** Neural ODE posterior on the observed trajectory of a dataset. */
  static PosteriorSpec neural(const Dataset& dataset, const MlpSpec& mlp,
                              Prior prior = QuadraticPrior{}, double likelihood_scale = 1.0);
};

/**
 * Log joint density of network weights given trajectory data:
 *   log p(theta) = -likelihood_scale * L(theta) + prior(theta),
 *   L(theta) = sum_i ||Y_i - Yhat_i(theta)||^2,
 * where Yhat integrates the vector field from the first observation.
 */
class OdePosterior final : public LogDensity {
public:
  explicit OdePosterior(PosteriorSpec spec);

  Index dim() const override { return spec_.field->param_dim(); }
  double log_density(const Vector& theta) const override { return log_joint(theta); }
  GradRecord log_density_grad(const Vector& theta) const override { return grad_log_joint(theta); }

  /** Squared-error loss; +inf when the rollout blows up. */
  double loss(const Vector& theta) const;
  /** Loss recorded on a tape (throws NonFiniteState on blow-up). */
  ad::Var loss(ad::Tape& tape, const ad::Var& theta) const;
  GradRecord loss_grad(const Vector& theta) const;
  double prior_term(const Vector& theta) const;
  Vector prior_grad(const Vector& theta) const;
  double log_joint(const Vector& theta) const;
  GradRecord grad_log_joint(const Vector& theta) const;

  /** Model trajectory on the data grid; throws NonFiniteState on blow-up. */
  Trajectory predict(const Vector& theta) const;
  /** Model trajectory from the same initial state on another grid. */
  Trajectory predict(const Vector& theta, const TimeGrid& grid) const;
  /** Loss of the constant prediction u(t) = u0 (zero vector field). */
  double zero_field_loss() const;

  const PosteriorSpec& spec() const { return spec_; }

private:
  PosteriorSpec spec_;
};

struct MapConfig {
  long steps = 2000;
  double lr = 1e-2;
  /** Cosine-decay the learning rate to zero over the run. */
  bool cosine_decay = true;
};

struct MapResult {
  Vector theta;
  double log_density = -std::numeric_limits<double>::infinity();
  /** Best-so-far objective after each step (non-decreasing). */
  std::vector<double> trace;
};

/** ADAM ascent on the log density; returns the best iterate seen. */
MapResult map_estimate(const LogDensity& target, const Vector& init, const MapConfig& cfg);

}  // namespace bnode

#endif  // BNODE_POSTERIOR_HPP
