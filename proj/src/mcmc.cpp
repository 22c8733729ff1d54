#include "bnode/mcmc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace bnode {

namespace {

constexpr int kMaxRetries = 100;

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

Vector standard_normal(Index dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector xi(dim);
  for (Index i = 0; i < dim; ++i) xi[i] = normal(rng);
  return xi;
}

GradRecord checked_start(const LogDensity& target, const Vector& init, const char* who) {
  if (init.size() != target.dim()) throw DimMismatch(std::string(who) + " init has the wrong length");
  GradRecord rec = target.log_density_grad(init);
  if (!rec.finite()) throw Error(std::string(who) + " init has non-finite log density");
  return rec;
}

void warn_on_decay(const SgldConfig& cfg) {
  if (!(cfg.gamma > 0.5 && cfg.gamma <= 1.0))
    log_warning("SGLD decay exponent " + std::to_string(cfg.gamma) +
                " is outside (0.5, 1]; the Robbins-Monro conditions do not hold");
}

}  // namespace

PhasePoint make_phase_point(const LogDensity& target, Vector theta, Vector momentum) {
  PhasePoint z;
  const GradRecord rec = target.log_density_grad(theta);
  z.theta = std::move(theta);
  z.momentum = std::move(momentum);
  z.log_density = rec.value;
  z.grad = rec.grad;
  return z;
}

PhasePoint leapfrog(const PhasePoint& z, double eps, const LogDensity& target) {
  const Vector r_half = z.momentum + 0.5 * eps * z.grad;
  PhasePoint out = make_phase_point(target, z.theta + eps * r_half, r_half);
  out.momentum += 0.5 * eps * out.grad;
  return out;
}

LeapfrogResult leapfrog(const Vector& theta, const Vector& r, double eps, const GradFn& grad_fn) {
  const GradRecord start = grad_fn(theta);
  const double h0 = -start.value + 0.5 * r.squaredNorm();
  LeapfrogResult out;
  const Vector r_half = r + 0.5 * eps * start.grad;
  out.theta = theta + eps * r_half;
  const GradRecord end = grad_fn(out.theta);
  out.momentum = r_half + 0.5 * eps * end.grad;
  const double h1 = -end.value + 0.5 * out.momentum.squaredNorm();
  out.divergent = !std::isfinite(h0) || !std::isfinite(h1) || std::abs(h1 - h0) > kMaxEnergyError;
  return out;
}

void SghmcConfig::validate() const {
  if (!(eta > 0.0)) throw ConfigError("SGHMC eta must be > 0");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("SGHMC alpha must lie in (0, 1]");
  if (!(beta_hat >= 0.0)) throw ConfigError("SGHMC beta_hat must be >= 0");
  if (!(alpha > beta_hat)) throw ConfigError("SGHMC needs alpha > beta_hat");
  if (!(temper >= 1.0)) throw ConfigError("SGHMC temper must be >= 1");
  if (n_samples < 0 || n_burnin < 0) throw ConfigError("SGHMC sample counts must be >= 0");
}

long sghmc_update(SghmcState& state, const LogDensity& target, const SghmcConfig& cfg,
                  std::mt19937_64& rng) {
  const double noise_std =
      std::sqrt(std::max(0.0, 2.0 * (cfg.alpha - cfg.beta_hat) * cfg.eta)) / cfg.temper;
  const Index dim = state.theta.size();
  for (long rejected = 0; rejected <= kMaxRetries; ++rejected) {
    Vector v = state.velocity + cfg.eta * state.at_theta.grad - cfg.alpha * state.velocity;
    if (noise_std > 0.0) v += noise_std * standard_normal(dim, rng);
    Vector theta = state.theta + v;
    GradRecord rec = target.log_density_grad(theta);
    if (rec.finite()) {
      state.theta = std::move(theta);
      state.velocity = std::move(v);
      state.at_theta = std::move(rec);
      return rejected;
    }
  }
  throw Error("SGHMC could not find a finite proposal; reduce eta");
}

Chain sghmc_sample(const LogDensity& target, const Vector& init, const SghmcConfig& cfg) {
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();
  SghmcState state{init, Vector::Zero(init.size()), checked_start(target, init, "SGHMC")};
  std::mt19937_64 rng(cfg.seed);
  Chain chain;
  chain.stats.gradient_evals = 1;
  chain.samples.reserve(static_cast<std::size_t>(cfg.n_samples));
  for (long it = 0; it < cfg.n_burnin + cfg.n_samples; ++it) {
    const long rejected = sghmc_update(state, target, cfg, rng);
    chain.stats.rejected += rejected;
    chain.stats.gradient_evals += rejected + 1;
    if (it >= cfg.n_burnin) {
      chain.samples.push_back(state.theta);
      chain.log_densities.push_back(state.at_theta.value);
    }
  }
  chain.stats.n_warmup = cfg.n_burnin;
  chain.stats.final_step_size = cfg.eta;
  chain.stats.wall_seconds = seconds_since(t_start);
  return chain;
}

void SgldConfig::validate() const {
  if (!(a > 0.0)) throw ConfigError("SGLD a must be > 0");
  if (!(b >= 0.0)) throw ConfigError("SGLD b must be >= 0");
  if (!(gamma > 0.0)) throw ConfigError("SGLD gamma must be > 0");
  if (n_iters < 1) throw ConfigError("SGLD n_iters must be >= 1");
  if (n_keep < 1 || n_keep > n_iters) throw ConfigError("SGLD n_keep must lie in [1, n_iters]");
}

double SgldConfig::step_size(long t) const {
  return a * std::pow(b + static_cast<double>(t), -gamma);
}

Chain sgld_sample(const LogDensity& target, const Vector& init, const SgldConfig& cfg) {
  cfg.validate();
  warn_on_decay(cfg);
  const auto t_start = std::chrono::steady_clock::now();
  Vector theta = init;
  GradRecord rec = checked_start(target, init, "SGLD");
  std::mt19937_64 rng(cfg.seed);
  Chain chain;
  chain.stats.gradient_evals = 1;
  chain.samples.reserve(static_cast<std::size_t>(cfg.n_keep));
  const long first_kept = cfg.n_iters - cfg.n_keep + 1;
  for (long t = 1; t <= cfg.n_iters; ++t) {
    const double eps = cfg.step_size(t);
    bool moved = false;
    for (int attempt = 0; attempt <= kMaxRetries && !moved; ++attempt) {
      Vector proposal = theta + 0.5 * eps * rec.grad +
                        langevin_noise_std(eps) * standard_normal(theta.size(), rng);
      GradRecord next = target.log_density_grad(proposal);
      ++chain.stats.gradient_evals;
      if (next.finite()) {
        theta = std::move(proposal);
        rec = std::move(next);
        moved = true;
      } else {
        ++chain.stats.rejected;
      }
    }
    if (!moved) throw Error("SGLD could not find a finite proposal; reduce the step size");
    chain.stats.step_sizes.push_back(eps);
    if (t >= first_kept) {
      chain.samples.push_back(theta);
      chain.log_densities.push_back(rec.value);
    }
  }
  chain.stats.n_warmup = first_kept - 1;
  chain.stats.final_step_size = cfg.step_size(cfg.n_iters);
  chain.stats.wall_seconds = seconds_since(t_start);
  return chain;
}

void PsgldConfig::validate() const {
  sgld.validate();
  if (!(rms_decay > 0.0 && rms_decay < 1.0)) throw ConfigError("pSGLD rms_decay must lie in (0, 1)");
  if (!(precond_floor > 0.0)) throw ConfigError("pSGLD precond_floor must be > 0");
}

RmsPreconditioner::RmsPreconditioner(Index dim, double decay, double floor)
    : v_(Vector::Zero(dim)), decay_(decay), floor_(floor) {}

void RmsPreconditioner::update(const Vector& grad) {
  v_ = decay_ * v_ + (1.0 - decay_) * grad.cwiseAbs2();
}

Vector RmsPreconditioner::preconditioner() const {
  return (floor_ + v_.array().sqrt()).inverse().matrix();
}

Chain psgld_sample(const LogDensity& target, const Vector& init, const PsgldConfig& cfg) {
  cfg.validate();
  warn_on_decay(cfg.sgld);
  const auto t_start = std::chrono::steady_clock::now();
  Vector theta = init;
  GradRecord rec = checked_start(target, init, "pSGLD");
  RmsPreconditioner rms(init.size(), cfg.rms_decay, cfg.precond_floor);
  std::mt19937_64 rng(cfg.sgld.seed);
  Chain chain;
  chain.stats.gradient_evals = 1;
  const SgldConfig& s = cfg.sgld;
  chain.samples.reserve(static_cast<std::size_t>(s.n_keep));
  const long first_kept = s.n_iters - s.n_keep + 1;
  for (long t = 1; t <= s.n_iters; ++t) {
    const double eps = s.step_size(t);
    rms.update(rec.grad);
    const Vector g = rms.preconditioner();
    bool moved = false;
    for (int attempt = 0; attempt <= kMaxRetries && !moved; ++attempt) {
      const Vector xi = standard_normal(theta.size(), rng);
      Vector proposal = theta + 0.5 * eps * g.cwiseProduct(rec.grad) +
                        (eps * g).cwiseSqrt().cwiseProduct(xi);
      GradRecord next = target.log_density_grad(proposal);
      ++chain.stats.gradient_evals;
      if (next.finite()) {
        theta = std::move(proposal);
        rec = std::move(next);
        moved = true;
      } else {
        ++chain.stats.rejected;
      }
    }
    if (!moved) throw Error("pSGLD could not find a finite proposal; reduce the step size");
    chain.stats.step_sizes.push_back(eps);
    if (t >= first_kept) {
      chain.samples.push_back(theta);
      chain.log_densities.push_back(rec.value);
    }
  }
  chain.stats.n_warmup = first_kept - 1;
  chain.stats.final_step_size = s.step_size(s.n_iters);
  chain.stats.wall_seconds = seconds_since(t_start);
  return chain;
}

}  // namespace bnode
