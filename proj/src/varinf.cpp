#include "bnode/varinf.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "bnode/optim.hpp"
#include "bnode/tape.hpp"

namespace bnode {

namespace {

const double kLogEMinus1 = std::log(std::numbers::e - 1.0);
const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// m(x) = softplus(x + ln(e - 1)) - 1, rewritten as log1p((1 - 1/e) expm1(x))
// for x <= 0 so that m(0) is exactly 0.
const double kOneMinusInvE = 1.0 - std::exp(-1.0);

double shifted_softplus(double x) {
  return x > 0 ? softplus(x + kLogEMinus1) - 1.0 : std::log1p(kOneMinusInvE * std::expm1(x));
}

ad::Var shifted_softplus(ad::Tape& tape, const ad::Var& x) {
  if (x.scalar() > 0) return tape.softplus(x + kLogEMinus1) - 1.0;
  return tape.log_abs(1.0 + kOneMinusInvE * (tape.exp(x) - 1.0));
}

std::vector<Vector> normal_draws(Index dim, long n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Vector> out(static_cast<std::size_t>(n), Vector(dim));
  for (Vector& e : out)
    for (Index i = 0; i < dim; ++i) e[i] = normal(rng);
  return out;
}

struct TapeDraw {
  ad::Var theta;
  ad::Var log_q;
};

// Reparameterized draw: phi holds the flat family parameters.
TapeDraw push_forward(ad::Tape& tape, const ad::Var& phi, Index dim, std::size_t n_layers,
                      const Vector& eps) {
  const ad::Var mu = tape.slice(phi, 0, dim);
  const ad::Var log_sigma = tape.slice(phi, dim, dim);
  ad::Var z = mu + tape.exp(log_sigma) * tape.constant(eps);
  ad::Var log_q = tape.constant(-0.5 * eps.squaredNorm() - static_cast<double>(dim) * kHalfLog2Pi) -
                  tape.sum(log_sigma);
  Index off = 2 * dim;
  for (std::size_t k = 0; k < n_layers; ++k) {
    const ad::Var u = tape.slice(phi, off, dim);
    const ad::Var w = tape.slice(phi, off + dim, dim);
    const ad::Var b = tape.slice(phi, off + 2 * dim, 1);
    off += 2 * dim + 1;
    const ad::Var wu = tape.dot(w, u);
    const ad::Var m = shifted_softplus(tape, wu);
    const ad::Var ww = tape.dot(w, w);
    // w = 0 makes the layer a constant shift, invertible for any u.
    const ad::Var u_hat = ww.scalar() > 0.0 ? u + ((m - wu) / ww) * w : u;
    const ad::Var h = tape.tanh(tape.dot(w, z) + b);
    z = z + u_hat * h;
    const ad::Var psi_u = (1.0 - h * h) * tape.dot(u_hat, w);
    log_q = log_q - tape.log_abs(1.0 + psi_u);
  }
  return {z, log_q};
}

}  // namespace

void FlowStack::validate() const {
  const Index d = dim();
  if (d < 1) throw DimMismatch("flow family needs dimension >= 1");
  if (base.log_sigma.size() != d) throw DimMismatch("log_sigma length differs from mu");
  if (!base.mu.allFinite() || !base.log_sigma.allFinite())
    throw ConfigError("flow base parameters must be finite");
  for (const PlanarLayer& l : layers) {
    if (l.u.size() != d || l.w.size() != d) throw DimMismatch("planar layer dimension mismatch");
    if (!l.u.allFinite() || !l.w.allFinite() || !std::isfinite(l.b))
      throw ConfigError("planar layer parameters must be finite");
  }
}

Vector FlowStack::to_flat() const {
  const Index d = dim();
  Vector flat(flat_size(d, layers.size()));
  flat.head(d) = base.mu;
  flat.segment(d, d) = base.log_sigma;
  Index off = 2 * d;
  for (const PlanarLayer& l : layers) {
    flat.segment(off, d) = l.u;
    flat.segment(off + d, d) = l.w;
    flat[off + 2 * d] = l.b;
    off += 2 * d + 1;
  }
  return flat;
}

FlowStack FlowStack::from_flat(Index dim, std::size_t n_layers, const Vector& flat) {
  if (flat.size() != flat_size(dim, n_layers)) throw DimMismatch("flat flow vector has the wrong length");
  FlowStack s;
  s.base.mu = flat.head(dim);
  s.base.log_sigma = flat.segment(dim, dim);
  Index off = 2 * dim;
  for (std::size_t k = 0; k < n_layers; ++k) {
    s.layers.push_back({flat.segment(off, dim), flat.segment(off + dim, dim), flat[off + 2 * dim]});
    off += 2 * dim + 1;
  }
  return s;
}

Vector corrected_u(const PlanarLayer& layer) {
  const double wu = layer.w.dot(layer.u);
  const double m = shifted_softplus(wu);
  const double ww = layer.w.squaredNorm();
  if (ww == 0.0) return layer.u;
  return layer.u + ((m - wu) / ww) * layer.w;
}

PlanarOutput planar_forward(const PlanarLayer& layer, const Vector& z) {
  if (z.size() != layer.u.size() || z.size() != layer.w.size())
    throw DimMismatch("planar layer dimension mismatch");
  const Vector u_hat = corrected_u(layer);
  const double h = std::tanh(layer.w.dot(z) + layer.b);
  return {z + u_hat * h, std::log(std::abs(1.0 + (1.0 - h * h) * u_hat.dot(layer.w)))};
}

Vector planar_inverse(const PlanarLayer& layer, const Vector& z_out, double tol) {
  const Vector u_hat = corrected_u(layer);
  const double wu = layer.w.dot(u_hat);
  // w.z_out + b = a + wu tanh(a), strictly increasing in a since wu > -1.
  const double target = layer.w.dot(z_out) + layer.b;
  double lo = target - std::abs(wu) - 1.0;
  double hi = target + std::abs(wu) + 1.0;
  for (int it = 0; it < 200 && hi - lo > tol * std::max(1.0, std::abs(target)); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid + wu * std::tanh(mid) < target)
      lo = mid;
    else
      hi = mid;
  }
  return z_out - u_hat * std::tanh(0.5 * (lo + hi));
}

std::vector<FlowDraw> flow_sample_and_logq(const FlowStack& stack, std::uint64_t seed, long n) {
  if (n < 1) throw ConfigError("flow sampling needs n >= 1");
  stack.validate();
  const Index d = stack.dim();
  const std::vector<Vector> eps = normal_draws(d, n, seed);
  const Vector flat = stack.to_flat();
  std::vector<FlowDraw> out;
  out.reserve(static_cast<std::size_t>(n));
  ad::Tape tape;
  for (const Vector& e : eps) {
    tape.clear();
    const TapeDraw draw = push_forward(tape, tape.constant(flat), d, stack.layers.size(), e);
    out.push_back({draw.theta.value(), draw.log_q.scalar()});
  }
  return out;
}

FlowStack init_flow(Index dim, std::size_t n_layers, std::uint64_t seed, double init_scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  FlowStack s;
  s.base.mu = Vector(dim);
  for (Index i = 0; i < dim; ++i) s.base.mu[i] = init_scale * normal(rng);
  s.base.log_sigma = Vector::Constant(dim, -2.3);
  for (std::size_t k = 0; k < n_layers; ++k) {
    PlanarLayer l{Vector::Zero(dim), Vector(dim), 0.0};
    for (Index i = 0; i < dim; ++i) l.w[i] = 0.01 * normal(rng);
    s.layers.push_back(std::move(l));
  }
  return s;
}

ElboEstimate elbo_with_grad(const LogDensity& target, const FlowStack& stack,
                            const std::vector<Vector>& base_draws) {
  const Index d = stack.dim();
  if (target.dim() != d) throw DimMismatch("flow family and target differ in dimension");
  const Vector flat = stack.to_flat();
  ElboEstimate est{-std::numeric_limits<double>::infinity(), Vector::Zero(flat.size()), 0};
  ad::Tape tape;
  const ad::Var phi = tape.variable(flat);
  std::vector<ad::Var> terms;
  for (const Vector& e : base_draws) {
    const TapeDraw draw = push_forward(tape, phi, d, stack.layers.size(), e);
    const GradRecord rec = target.log_density_grad(draw.theta.value());
    if (!rec.finite() || !std::isfinite(draw.log_q.scalar())) {
      ++est.skipped;
      continue;
    }
    terms.push_back(tape.external(draw.theta, rec.value, rec.grad) - draw.log_q);
  }
  if (terms.empty()) return est;
  const ad::Var elbo = tape.scale(tape.sum(tape.concat(terms)), 1.0 / static_cast<double>(terms.size()));
  tape.backward(elbo);
  est.value = elbo.scalar();
  est.grad = tape.gradient(phi);
  return est;
}

double elbo_estimate(const LogDensity& target, const FlowStack& stack, long n, std::uint64_t seed) {
  const std::vector<FlowDraw> draws = flow_sample_and_logq(stack, seed, n);
  double total = 0.0;
  long used = 0;
  for (const FlowDraw& d : draws) {
    const double lp = target.log_density(d.theta);
    if (!std::isfinite(lp)) continue;
    total += lp - d.log_q;
    ++used;
  }
  return used > 0 ? total / static_cast<double>(used) : -std::numeric_limits<double>::infinity();
}

void AdviConfig::validate() const {
  if (mc_samples < 1) throw ConfigError("ADVI needs mc_samples >= 1");
  if (max_steps < 1) throw ConfigError("ADVI needs max_steps >= 1");
  if (!(lr > 0.0)) throw ConfigError("ADVI lr must be > 0");
  if (eval_every < 1 || eval_draws < 1) throw ConfigError("ADVI evaluation settings must be >= 1");
  if (window < 1 || !(tol >= 0.0)) throw ConfigError("ADVI convergence settings are invalid");
}

AdviResult advi_fit(const LogDensity& target, const FlowStack& family, const AdviConfig& cfg) {
  cfg.validate();
  family.validate();
  const Index d = family.dim();
  const std::size_t n_layers = family.layers.size();
  const std::vector<Vector> eval_eps = normal_draws(d, cfg.eval_draws, derive_seed(cfg.seed, 1));
  auto evaluate = [&](const FlowStack& s) {
    const ElboEstimate e = elbo_with_grad(target, s, eval_eps);
    return e.skipped > 0 ? -std::numeric_limits<double>::infinity() : e.value;
  };

  AdviResult res{family, {}, {}, 0.0, 0.0};
  res.initial_elbo = evaluate(family);
  res.best_elbo = res.initial_elbo;

  std::mt19937_64 rng(derive_seed(cfg.seed, 2));
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector x = family.to_flat();
  Adam adam(x.size());
  double window_sum = 0.0;

  for (long step = 0; step < cfg.max_steps; ++step) {
    std::vector<Vector> eps(static_cast<std::size_t>(cfg.mc_samples), Vector(d));
    for (Vector& e : eps)
      for (Index i = 0; i < d; ++i) e[i] = normal(rng);
    const FlowStack current = FlowStack::from_flat(d, n_layers, x);
    const ElboEstimate est = elbo_with_grad(target, current, eps);
    res.skipped += est.skipped;
    ++res.steps;
    if (!std::isfinite(est.value) || !est.grad.allFinite()) {
      x = res.family.to_flat();
      continue;
    }
    res.elbo_trace.push_back(est.value);
    window_sum += est.value;
    const std::size_t n_trace = res.elbo_trace.size();
    if (n_trace > static_cast<std::size_t>(cfg.window))
      window_sum -= res.elbo_trace[n_trace - 1 - static_cast<std::size_t>(cfg.window)];
    res.smoothed_trace.push_back(window_sum /
                                 static_cast<double>(std::min<std::size_t>(n_trace, cfg.window)));

    const double lr = cfg.cosine_decay ? cosine_lr(cfg.lr, step, cfg.max_steps) : cfg.lr;
    adam.step(x, est.grad, lr);

    if ((step + 1) % cfg.eval_every == 0 || step + 1 == cfg.max_steps) {
      const FlowStack candidate = FlowStack::from_flat(d, n_layers, x);
      const double value = evaluate(candidate);
      if (value > res.best_elbo) {
        res.best_elbo = value;
        res.family = candidate;
      }
    }

    const std::size_t lag = static_cast<std::size_t>(cfg.window);
    if (res.smoothed_trace.size() > 2 * lag) {
      const double now = res.smoothed_trace.back();
      const double before = res.smoothed_trace[res.smoothed_trace.size() - 1 - lag];
      if (std::abs(now - before) < cfg.tol * std::abs(before)) {
        res.converged = true;
        const FlowStack candidate = FlowStack::from_flat(d, n_layers, x);
        const double value = evaluate(candidate);
        if (value > res.best_elbo) {
          res.best_elbo = value;
          res.family = candidate;
        }
        break;
      }
    }
  }
  return res;
}

}  // namespace bnode
