#ifndef BNODE_MCMC_HPP
#define BNODE_MCMC_HPP

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "bnode/common.hpp"
#include "bnode/posterior.hpp"

namespace bnode {

class AllDivergent : public Error {
public:
  using Error::Error;
};

/** Energy error beyond which a trajectory counts as divergent. */
inline constexpr double kMaxEnergyError = 1000.0;

struct ChainStats {
  std::vector<double> accept_stat;  // per iteration, warmup included (NUTS)
  std::vector<double> step_sizes;   // per iteration, warmup included
  std::vector<int> tree_depths;     // NUTS only
  long n_warmup = 0;                // leading entries of the traces above that are warmup
  long divergences = 0;
  long rejected = 0;                // non-finite SG-MCMC proposals rolled back
  long gradient_evals = 0;
  double final_step_size = 0.0;
  double wall_seconds = 0.0;
};

struct Chain {
  std::vector<Vector> samples;
  std::vector<double> log_densities;
  ChainStats stats;

  std::size_t size() const { return samples.size(); }
};

// --------------------------------------------------------------------------
// Hamiltonian dynamics with identity mass matrix.

/** Position, momentum and cached log density / gradient at the position. */
struct PhasePoint {
  Vector theta;
  Vector momentum;
  double log_density = 0.0;
  Vector grad;

  double hamiltonian() const { return -log_density + 0.5 * momentum.squaredNorm(); }
};

PhasePoint make_phase_point(const LogDensity& target, Vector theta, Vector momentum);

/** Half kick, drift, half kick with potential U = -log p. */
PhasePoint leapfrog(const PhasePoint& z, double eps, const LogDensity& target);

using GradFn = std::function<GradRecord(const Vector&)>;

struct LeapfrogResult {
  Vector theta;
  Vector momentum;
  /** |H' - H| > kMaxEnergyError or non-finite. */
  bool divergent = false;
};

/** Single leapfrog step driven by a log-density gradient function. */
LeapfrogResult leapfrog(const Vector& theta, const Vector& r, double eps, const GradFn& grad_fn);

// --------------------------------------------------------------------------
// NUTS

/** Dual-averaging step-size adaptation towards a target acceptance statistic. */
class DualAveraging {
public:
  DualAveraging(double initial_step, double delta, double gamma = 0.05, double t0 = 10.0,
                double kappa = 0.75);

  /** Feeds one acceptance statistic; returns the next step size to use. */
  double update(double accept_stat);
  double step_size() const { return std::exp(log_step_); }
  /** Averaged step size used after adaptation ends. */
  double averaged_step_size() const { return std::exp(log_step_bar_); }

private:
  double mu_;
  double delta_;
  double gamma_;
  double t0_;
  double kappa_;
  double h_bar_ = 0.0;
  double log_step_;
  double log_step_bar_ = 0.0;
  long count_ = 0;
};

struct NutsConfig {
  double delta = 0.8;
  long n_warmup = 1000;
  long n_samples = 1000;
  /**
   * Doublings beyond the first step: a depth-d tree holds up to 2^(d+1) - 1
   * leapfrog steps, so 0 is a single step with multinomial acceptance.
   */
  int max_tree_depth = 9;
  std::uint64_t seed = 0;
  /** Starting step size; <= 0 selects one with the doubling/halving heuristic. */
  double initial_step_size = 0.0;

  void validate() const;
};

/** Heuristic initial step size: double/halve until acceptance crosses 0.5. */
double find_initial_step_size(const LogDensity& target, const Vector& theta, std::mt19937_64& rng,
                              double start = 1.0);

/**
 * Multinomial No-U-Turn sampler with the generalized U-turn criterion,
 * dual-averaging adaptation during warmup and a fixed step afterwards.
 */
Chain nuts_sample(const LogDensity& target, const Vector& init, const NutsConfig& cfg);

// --------------------------------------------------------------------------
// Stochastic-gradient samplers

struct SghmcConfig {
  double eta = 1e-3;
  double alpha = 0.05;
  double beta_hat = 0.0;
  long n_samples = 1000;
  long n_burnin = 0;
  double temper = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SghmcState {
  Vector theta;
  Vector velocity;
  GradRecord at_theta;
};

/**
 * One SGHMC update in the friction form
 *   v <- v - eta grad U(theta) - alpha v + N(0, 2 (alpha - beta_hat) eta / temper^2)
 *   theta <- theta + v
 * with U = -log p.  A non-finite proposal is rolled back and the noise
 * redrawn; returns the number of rollbacks.  Does not validate `cfg`, so
 * the noise-free case beta_hat == alpha can be stepped directly.
 */
long sghmc_update(SghmcState& state, const LogDensity& target, const SghmcConfig& cfg,
                  std::mt19937_64& rng);

/** Runs sghmc_update from v = 0 and records every post-burn-in iterate. */
Chain sghmc_sample(const LogDensity& target, const Vector& init, const SghmcConfig& cfg);

struct SgldConfig {
  double a = 0.0025;
  double b = 0.05;
  double gamma = 0.35;
  long n_iters = 45000;
  long n_keep = 2000;
  std::uint64_t seed = 0;

  void validate() const;
  /** eps_t = a (b + t)^-gamma, t = 1, 2, ... */
  double step_size(long t) const;
};

/** Standard deviation of the injected Langevin noise for step size eps. */
inline double langevin_noise_std(double eps) { return std::sqrt(eps); }

/** theta += eps_t/2 grad log p(theta) + N(0, eps_t); keeps the last n_keep iterates. */
Chain sgld_sample(const LogDensity& target, const Vector& init, const SgldConfig& cfg);

struct PsgldConfig {
  SgldConfig sgld;
  double rms_decay = 0.99;
  double precond_floor = 1e-5;

  void validate() const;
};

/** RMSprop accumulator and the diagonal preconditioner derived from it. */
class RmsPreconditioner {
public:
  RmsPreconditioner(Index dim, double decay, double floor);

  /** V <- decay V + (1 - decay) g^2. */
  void update(const Vector& grad);
  /** G = 1 / (floor + sqrt(V)). */
  Vector preconditioner() const;
  const Vector& accumulator() const { return v_; }

private:
  Vector v_;
  double decay_;
  double floor_;
};

/**
 * Preconditioned SGLD: theta += eps_t/2 G grad + N(0, eps_t G), with G from
 * RmsPreconditioner.  The curvature-correction drift term is omitted.
 */
Chain psgld_sample(const LogDensity& target, const Vector& init, const PsgldConfig& cfg);

}  // namespace bnode

#endif  // BNODE_MCMC_HPP
