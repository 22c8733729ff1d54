#ifndef BNODE_VARINF_HPP
#define BNODE_VARINF_HPP

#include <cstdint>
#include <vector>

#include "bnode/common.hpp"
#include "bnode/gradient.hpp"
#include "bnode/posterior.hpp"

namespace bnode {

struct MeanFieldParams {
  Vector mu;
  Vector log_sigma;
};

/** f(z) = z + u_hat tanh(w.z + b). */
struct PlanarLayer {
  Vector u;
  Vector w;
  double b = 0.0;
};

struct FlowStack {
  MeanFieldParams base;
  std::vector<PlanarLayer> layers;

  Index dim() const { return base.mu.size(); }
  void validate() const;

  /** [mu, log_sigma, (u, w, b) per layer] */
  Vector to_flat() const;
  static FlowStack from_flat(Index dim, std::size_t n_layers, const Vector& flat);
  static Index flat_size(Index dim, std::size_t n_layers) {
    return 2 * dim + static_cast<Index>(n_layers) * (2 * dim + 1);
  }
};

/**
 * Invertibility-corrected u: u + (m(w.u) - w.u) w / |w|^2 with
 * m(x) = softplus(x + ln(e - 1)) - 1, so that w.u_hat = m(w.u) > -1 and
 * u = 0 maps to u_hat = 0.
 */
Vector corrected_u(const PlanarLayer& layer);

struct PlanarOutput {
  Vector z;
  double log_det;
};

PlanarOutput planar_forward(const PlanarLayer& layer, const Vector& z);

/** Inverse of planar_forward by bisection on the scalar w.z + b. */
Vector planar_inverse(const PlanarLayer& layer, const Vector& z_out, double tol = 1e-13);

struct FlowDraw {
  Vector theta;
  double log_q;
};

/** Base draws pushed through every layer, with log q = log q0 - sum log_det. */
std::vector<FlowDraw> flow_sample_and_logq(const FlowStack& stack, std::uint64_t seed, long n);

/** mu from a seeded N(0, init_scale^2), log_sigma = -2.3, u = 0, small random w, b = 0. */
FlowStack init_flow(Index dim, std::size_t n_layers, std::uint64_t seed, double init_scale = 0.1);

/**
 * Monte Carlo ELBO mean_s[log p(theta_s) - log q(theta_s)] over the given
 * standard-normal base draws, with its reparameterization gradient in the
 * flat parameter layout.  Draws with non-finite log p are skipped.
 */
struct ElboEstimate {
  double value;
  Vector grad;
  long skipped = 0;
};

ElboEstimate elbo_with_grad(const LogDensity& target, const FlowStack& stack,
                            const std::vector<Vector>& base_draws);

/** ELBO estimate from `n` seeded draws (value only). */
double elbo_estimate(const LogDensity& target, const FlowStack& stack, long n, std::uint64_t seed);

struct AdviConfig {
  long mc_samples = 10;
  long max_steps = 5000;
  double lr = 1e-2;
  bool cosine_decay = true;
  std::uint64_t seed = 0;
  /** Best-so-far tracking: ELBO on fixed draws every eval_every steps. */
  long eval_every = 100;
  long eval_draws = 100;
  /** Stop when the windowed mean ELBO changes by less than tol (relative) over `window` steps. */
  double tol = 1e-4;
  long window = 100;

  void validate() const;
};

struct AdviResult {
  FlowStack family;
  std::vector<double> elbo_trace;
  std::vector<double> smoothed_trace;
  double initial_elbo;
  double best_elbo;
  long steps = 0;
  long skipped = 0;
  bool converged = false;
};

/** ADAM ascent on the ELBO; returns the best parameters on the fixed evaluation draws. */
AdviResult advi_fit(const LogDensity& target, const FlowStack& family, const AdviConfig& cfg);

}  // namespace bnode

#endif  // BNODE_VARINF_HPP
