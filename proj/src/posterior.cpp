#include "bnode/posterior.hpp"

#include <cmath>
#include <limits>

#include "bnode/optim.hpp"

namespace bnode {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

NeuralField::NeuralField(MlpSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  if (spec_.input_dim() != spec_.output_dim())
    throw ConfigError("a neural vector field needs equal input and output widths");
}

PosteriorSpec PosteriorSpec::neural(const Dataset& dataset, const MlpSpec& mlp, Prior prior,
                                    double likelihood_scale) {
  return PosteriorSpec{dataset.observed, std::make_shared<NeuralField>(mlp), std::move(prior),
                       likelihood_scale};
}

OdePosterior::OdePosterior(PosteriorSpec spec) : spec_(std::move(spec)) {
  if (!spec_.field) throw ConfigError("posterior needs a vector field");
  spec_.data.validate();
  if (spec_.data.dim() != spec_.field->state_dim())
    throw DimMismatch("vector field state dimension does not match the data");
  if (!(spec_.likelihood_scale > 0.0)) throw ConfigError("likelihood_scale must be > 0");
  if (const auto* g = std::get_if<GaussianPrior>(&spec_.prior)) {
    if (g->mean.size() != spec_.field->param_dim())
      throw DimMismatch("Gaussian prior mean has the wrong length");
    if (!(g->sigma > 0.0)) throw ConfigError("Gaussian prior sigma must be > 0");
  }
}

Trajectory OdePosterior::predict(const Vector& theta, const TimeGrid& grid) const {
  if (theta.size() != dim()) throw DimMismatch("parameter vector has the wrong length");
  const VectorField& f = *spec_.field;
  auto rhs = [&](double t, const Vector& u) { return f.eval(theta, t, u); };
  return integrate(rhs, spec_.data.states.front(), grid);
}

Trajectory OdePosterior::predict(const Vector& theta) const { return predict(theta, spec_.data.grid); }

double OdePosterior::loss(const Vector& theta) const {
  Trajectory pred;
  try {
    pred = predict(theta);
  } catch (const NonFiniteState&) {
    return kInf;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < pred.states.size(); ++i)
    total += (spec_.data.states[i] - pred.states[i]).squaredNorm();
  return std::isfinite(total) ? total : kInf;
}

ad::Var OdePosterior::loss(ad::Tape& tape, const ad::Var& theta) const {
  const VectorField& f = *spec_.field;
  auto rhs = [&](double t, const ad::Var& u) { return f.eval(theta, t, u); };
  const ad::Var u0 = tape.constant(spec_.data.states.front());
  const std::vector<ad::Var> states = integrate_states(rhs, u0, spec_.data.grid);
  std::vector<ad::Var> terms;
  terms.reserve(states.size());
  for (std::size_t i = 0; i < states.size(); ++i)
    terms.push_back(tape.sum_squares(states[i] - tape.constant(spec_.data.states[i])));
  return tape.sum(tape.concat(terms));
}

GradRecord OdePosterior::loss_grad(const Vector& theta) const {
  if (theta.size() != dim()) throw DimMismatch("parameter vector has the wrong length");
  return grad_through_integrator(
      [this](ad::Tape& tape, const ad::Var& x) { return loss(tape, x); }, theta);
}

double OdePosterior::prior_term(const Vector& theta) const {
  if (const auto* g = std::get_if<GaussianPrior>(&spec_.prior))
    return -(theta - g->mean).squaredNorm() / (2.0 * g->sigma * g->sigma);
  return -theta.squaredNorm();
}

Vector OdePosterior::prior_grad(const Vector& theta) const {
  if (const auto* g = std::get_if<GaussianPrior>(&spec_.prior))
    return -(theta - g->mean) / (g->sigma * g->sigma);
  return -2.0 * theta;
}

double OdePosterior::log_joint(const Vector& theta) const {
  const double l = loss(theta);
  if (!std::isfinite(l)) return -kInf;
  return -spec_.likelihood_scale * l + prior_term(theta);
}

GradRecord OdePosterior::grad_log_joint(const Vector& theta) const {
  GradRecord rec;
  try {
    rec = loss_grad(theta);
  } catch (const NonFiniteState&) {
    return {-kInf, Vector::Zero(theta.size())};
  } catch (const NonFiniteGradient&) {
    return {-kInf, Vector::Zero(theta.size())};
  }
  rec.value = -spec_.likelihood_scale * rec.value + prior_term(theta);
  rec.grad = -spec_.likelihood_scale * rec.grad + prior_grad(theta);
  return rec;
}

double OdePosterior::zero_field_loss() const {
  const Vector& u0 = spec_.data.states.front();
  double total = 0.0;
  for (const Vector& s : spec_.data.states) total += (s - u0).squaredNorm();
  return total;
}

MapResult map_estimate(const LogDensity& target, const Vector& init, const MapConfig& cfg) {
  if (cfg.steps < 1) throw ConfigError("MAP needs steps >= 1");
  if (init.size() != target.dim()) throw DimMismatch("MAP init has the wrong length");
  MapResult result;
  result.theta = init;
  result.trace.reserve(static_cast<std::size_t>(cfg.steps));
  Adam adam(init.size());
  Vector x = init;
  double backoff = 1.0;
  for (long step = 0; step < cfg.steps; ++step) {
    const GradRecord rec = target.log_density_grad(x);
    if (!rec.finite()) {
      // Step back to the best point seen with a smaller learning rate;
      // retrying the same ADAM step would land on the same blow-up.
      x = result.theta;
      backoff *= 0.5;
      result.trace.push_back(result.log_density);
      if (!std::isfinite(result.log_density)) throw Error("MAP init has non-finite log density");
      continue;
    }
    if (rec.value > result.log_density) {
      result.log_density = rec.value;
      result.theta = x;
    }
    result.trace.push_back(result.log_density);
    const double lr = cfg.cosine_decay ? cosine_lr(cfg.lr, step, cfg.steps) : cfg.lr;
    adam.step(x, rec.grad, lr * backoff);
  }
  const double last = target.log_density(x);
  if (std::isfinite(last) && last > result.log_density) {
    result.log_density = last;
    result.theta = x;
    result.trace.back() = last;
  }
  return result;
}

}  // namespace bnode
