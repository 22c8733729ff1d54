#include <chrono>
#include <cmath>
#include <limits>

#include "bnode/mcmc.hpp"

// Multinomial NUTS following Betancourt (2017), "A Conceptual Introduction
// to Hamiltonian Monte Carlo", with the extra U-turn checks across subtree
// boundaries used by current Stan releases.  Mass matrix is the identity.

namespace bnode {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

bool no_u_turn(const Vector& p_minus, const Vector& p_plus, const Vector& rho) {
  return p_minus.dot(rho) > 0.0 && p_plus.dot(rho) > 0.0;
}

Vector sample_momentum(Index dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector p(dim);
  for (Index i = 0; i < dim; ++i) p[i] = normal(rng);
  return p;
}

class Transition {
public:
  Transition(const LogDensity& target, double eps, std::mt19937_64& rng)
      : target_(target), eps_(eps), rng_(rng) {}

  // Extends the trajectory from `z` by 2^depth leapfrog steps in direction
  // `sign`.  Returns false when the new subtree diverged or turned back.
  bool build_tree(int depth, PhasePoint& z, PhasePoint& z_propose, Vector& p_beg, Vector& p_end,
                  Vector& rho, double& log_sum_weight, double sign) {
    if (depth == 0) {
      z = leapfrog(z, sign * eps_, target_);
      ++n_leapfrog;
      double h = z.hamiltonian();
      if (!std::isfinite(h)) h = std::numeric_limits<double>::infinity();
      if (h - h0 > kMaxEnergyError) divergent = true;
      log_sum_weight = log_sum_exp(log_sum_weight, h0 - h);
      sum_metro_prob += h0 - h > 0.0 ? 1.0 : std::exp(h0 - h);
      z_propose = z;
      p_beg = z.momentum;
      p_end = z.momentum;
      rho += z.momentum;
      return !divergent;
    }

    const Index dim = z.theta.size();
    Vector rho_left = Vector::Zero(dim);
    Vector p_left_end(dim);
    double log_sum_weight_left = kNegInf;
    if (!build_tree(depth - 1, z, z_propose, p_beg, p_left_end, rho_left, log_sum_weight_left,
                    sign))
      return false;

    PhasePoint z_propose_right;
    Vector rho_right = Vector::Zero(dim);
    Vector p_right_beg(dim);
    double log_sum_weight_right = kNegInf;
    if (!build_tree(depth - 1, z, z_propose_right, p_right_beg, p_end, rho_right,
                    log_sum_weight_right, sign))
      return false;

    const double log_sum_weight_subtree = log_sum_exp(log_sum_weight_left, log_sum_weight_right);
    log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);

    if (log_sum_weight_right > log_sum_weight_subtree) {
      z_propose = z_propose_right;
    } else if (uniform_(rng_) < std::exp(log_sum_weight_right - log_sum_weight_subtree)) {
      z_propose = z_propose_right;
    }

    const Vector rho_subtree = rho_left + rho_right;
    rho += rho_subtree;
    bool persist = no_u_turn(p_beg, p_end, rho_subtree);
    persist = persist && no_u_turn(p_beg, p_right_beg, rho_left + p_right_beg);
    persist = persist && no_u_turn(p_left_end, p_end, rho_right + p_left_end);
    return persist;
  }

  long n_leapfrog = 0;
  double sum_metro_prob = 0.0;
  bool divergent = false;
  double h0 = 0.0;

private:
  const LogDensity& target_;
  double eps_;
  std::mt19937_64& rng_;
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

struct TransitionResult {
  PhasePoint sample;
  double accept_stat;
  int depth;
  bool divergent;
  long n_leapfrog;
};

TransitionResult nuts_transition(const LogDensity& target, const PhasePoint& start, double eps,
                                 int max_depth, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const Index dim = start.theta.size();

  PhasePoint z = start;
  z.momentum = sample_momentum(dim, rng);
  Transition tr(target, eps, rng);
  tr.h0 = z.hamiltonian();

  PhasePoint z_fwd = z;
  PhasePoint z_bck = z;
  PhasePoint z_sample = z;
  PhasePoint z_propose;

  Vector p_fwd_fwd = z.momentum, p_fwd_bck = z.momentum;
  Vector p_bck_fwd = z.momentum, p_bck_bck = z.momentum;
  Vector rho = z.momentum;
  double log_sum_weight = 0.0;
  int depth = 0;

  while (depth <= max_depth) {
    Vector rho_fwd = Vector::Zero(dim);
    Vector rho_bck = Vector::Zero(dim);
    double log_sum_weight_subtree = kNegInf;
    bool valid = false;

    if (uniform(rng) > 0.5) {
      rho_bck = rho;
      p_bck_fwd = p_fwd_bck;
      valid = tr.build_tree(depth, z_fwd, z_propose, p_fwd_bck, p_fwd_fwd, rho_fwd,
                            log_sum_weight_subtree, 1.0);
    } else {
      rho_fwd = rho;
      p_fwd_bck = p_bck_fwd;
      valid = tr.build_tree(depth, z_bck, z_propose, p_bck_fwd, p_bck_bck, rho_bck,
                            log_sum_weight_subtree, -1.0);
    }
    if (!valid) break;
    ++depth;

    if (log_sum_weight_subtree > log_sum_weight) {
      z_sample = z_propose;
    } else if (uniform(rng) < std::exp(log_sum_weight_subtree - log_sum_weight)) {
      z_sample = z_propose;
    }
    log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);

    rho = rho_bck + rho_fwd;
    bool persist = no_u_turn(p_bck_bck, p_fwd_fwd, rho);
    persist = persist && no_u_turn(p_bck_bck, p_fwd_bck, rho_bck + p_fwd_bck);
    persist = persist && no_u_turn(p_bck_fwd, p_fwd_fwd, rho_fwd + p_bck_fwd);
    if (!persist) break;
  }

  const double accept =
      tr.n_leapfrog > 0 ? tr.sum_metro_prob / static_cast<double>(tr.n_leapfrog) : 0.0;
  return {z_sample, accept, depth, tr.divergent, tr.n_leapfrog};
}

}  // namespace

DualAveraging::DualAveraging(double initial_step, double delta, double gamma, double t0,
                             double kappa)
    : mu_(std::log(10.0 * initial_step)),
      delta_(delta),
      gamma_(gamma),
      t0_(t0),
      kappa_(kappa),
      log_step_(std::log(initial_step)) {}

double DualAveraging::update(double accept_stat) {
  if (std::isnan(accept_stat)) accept_stat = 0.0;
  accept_stat = std::min(accept_stat, 1.0);
  ++count_;
  const double n = static_cast<double>(count_);
  const double eta = 1.0 / (n + t0_);
  h_bar_ = (1.0 - eta) * h_bar_ + eta * (delta_ - accept_stat);
  log_step_ = mu_ - h_bar_ * std::sqrt(n) / gamma_;
  const double w = std::pow(n, -kappa_);
  log_step_bar_ = (1.0 - w) * log_step_bar_ + w * log_step_;
  return std::exp(log_step_);
}

void NutsConfig::validate() const {
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("NUTS delta must lie in (0, 1)");
  if (n_warmup < 0 || n_samples < 0) throw ConfigError("NUTS sample counts must be >= 0");
  if (max_tree_depth < 0) throw ConfigError("NUTS max_tree_depth must be >= 0");
}

double find_initial_step_size(const LogDensity& target, const Vector& theta, std::mt19937_64& rng,
                              double start) {
  double eps = start;
  const Index dim = theta.size();
  const PhasePoint init = make_phase_point(target, theta, Vector::Zero(dim));
  const double log_threshold = std::log(0.8);

  auto energy_change = [&](double step) {
    PhasePoint z = init;
    z.momentum = sample_momentum(dim, rng);
    const double h0 = z.hamiltonian();
    z = leapfrog(z, step, target);
    double h = z.hamiltonian();
    if (!std::isfinite(h)) h = std::numeric_limits<double>::infinity();
    return h0 - h;
  };

  const int direction = energy_change(eps) > log_threshold ? 1 : -1;
  for (int iter = 0; iter < 200; ++iter) {
    const double delta_h = energy_change(eps);
    if (direction == 1 && !(delta_h > log_threshold)) break;
    if (direction == -1 && !(delta_h < log_threshold)) break;
    eps = direction == 1 ? 2.0 * eps : 0.5 * eps;
    if (eps > 1e7) throw Error("initial step size search diverged; posterior may be improper");
    if (eps == 0.0) throw Error("initial step size search collapsed to zero");
  }
  return eps;
}

Chain nuts_sample(const LogDensity& target, const Vector& init, const NutsConfig& cfg) {
  cfg.validate();
  if (init.size() != target.dim()) throw DimMismatch("NUTS init has the wrong length");
  const auto t_start = std::chrono::steady_clock::now();

  std::mt19937_64 rng(cfg.seed);
  PhasePoint z = make_phase_point(target, init, Vector::Zero(init.size()));
  if (!std::isfinite(z.log_density)) throw Error("NUTS init has non-finite log density");

  Chain chain;
  chain.stats.gradient_evals = 1;
  double eps = cfg.initial_step_size > 0.0 ? cfg.initial_step_size
                                           : find_initial_step_size(target, init, rng);
  DualAveraging adapt(eps, cfg.delta);
  long warmup_divergences = 0;

  const long total = cfg.n_warmup + cfg.n_samples;
  chain.samples.reserve(static_cast<std::size_t>(cfg.n_samples));
  for (long it = 0; it < total; ++it) {
    const bool warmup = it < cfg.n_warmup;
    const TransitionResult res = nuts_transition(target, z, eps, cfg.max_tree_depth, rng);
    chain.stats.gradient_evals += res.n_leapfrog;
    chain.stats.step_sizes.push_back(eps);
    chain.stats.accept_stat.push_back(res.accept_stat);
    chain.stats.tree_depths.push_back(res.depth);
    if (res.divergent) {
      ++chain.stats.divergences;
      if (warmup) ++warmup_divergences;
    }
    z = res.sample;

    if (warmup) {
      eps = adapt.update(res.accept_stat);
      if (it + 1 == cfg.n_warmup) {
        if (warmup_divergences == cfg.n_warmup)
          throw AllDivergent("every warmup iteration diverged");
        eps = adapt.averaged_step_size();
      }
    } else {
      chain.samples.push_back(z.theta);
      chain.log_densities.push_back(z.log_density);
    }
  }
  chain.stats.n_warmup = cfg.n_warmup;
  chain.stats.final_step_size = eps;
  chain.stats.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return chain;
}

}  // namespace bnode
