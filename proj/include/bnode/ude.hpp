#ifndef BNODE_UDE_HPP
#define BNODE_UDE_HPP

#include <array>
#include <map>
#include <string>
#include <vector>

#include "bnode/common.hpp"
#include "bnode/mcmc.hpp"
#include "bnode/mlp.hpp"
#include "bnode/posterior.hpp"
#include "bnode/systems.hpp"

namespace bnode {

enum class UdeBase { LvMissingInteraction, SeirMissingExposure };

UdeBase parse_ude_base(const std::string& name);
std::string to_string(UdeBase base);

struct UdeSpec {
  UdeBase base = UdeBase::LvMissingInteraction;
  std::map<std::string, double> known_params;
  MlpSpec nn;
  Dataset dataset;

  /** Checks the (2 -> 1) network shape and that the dataset matches the base system. */
  void validate() const;
};

/**
 * Mechanistic system with one term replaced by a network M_theta:
 *   LV:   (alpha u1 - M(u1, u2), -delta u2 + gamma u1 u2)
 *   SEIR: (-beta S I, beta S I - M(E, I), sigma E - gamma I, gamma I)
 */
class UdeField final : public VectorField {
public:
  UdeField(UdeBase base, const std::map<std::string, double>& params, MlpSpec nn);

  Index state_dim() const override { return base_ == UdeBase::LvMissingInteraction ? 2 : 4; }
  Index param_dim() const override { return nn_.param_count(); }
  Vector eval(const Vector& theta, double t, const Vector& u) const override;
  ad::Var eval(const ad::Var& theta, double t, const ad::Var& u) const override;

  /** Network inputs for a full state: (u1, u2) or (E, I). */
  Vector term_inputs(const Vector& u) const;
  double missing_term(const Vector& theta, const Vector& u) const;

private:
  template <class V, class P>
  V eval_impl(const P& theta, const V& u) const;

  UdeBase base_;
  LotkaVolterraParams lv_;
  SeirParams seir_;
  MlpSpec nn_;
};

std::shared_ptr<const UdeField> make_ude_field(const UdeSpec& spec);

/** Posterior over the network weights with the universal ODE as the model. */
OdePosterior ude_posterior(const UdeSpec& spec, double likelihood_scale = 1.0,
                           Prior prior = QuadraticPrior{});

/** pSGLD on the UDE posterior; the chain holds the trailing cfg.sgld.n_keep iterates. */
Chain train_ude_psgld(const UdeSpec& spec, const PsgldConfig& cfg, const Vector& init,
                      double likelihood_scale = 1.0);

/** Derivative at every saved state from a local quadratic fit over 5 neighbouring points. */
std::vector<Vector> estimate_derivatives(const Trajectory& data);

/** Regression targets for M from estimated derivatives: alpha u1 - du1/dt or beta S I - dE/dt. */
Vector collocation_targets(const UdeSpec& spec);

/**
 * Fits M_theta to the collocation targets by ADAM on the squared error.
 * Used to start the ODE-loss fit near a sensible network, since rollouts
 * from a random network often leave the data's range entirely.
 */
Vector collocation_fit(const UdeSpec& spec, const Vector& init, long steps, double lr = 1e-2);

/** M_theta at every saved state of `trajectory`. */
Vector eval_missing_term(const Vector& theta, const Trajectory& trajectory, const UdeSpec& spec);

/** The true missing term at every saved state (u1 u2 scaled by beta, or sigma E). */
Vector true_missing_term(const Trajectory& trajectory, const UdeSpec& spec);

// --------------------------------------------------------------------------
// Sparse regression

inline constexpr int kBasisSize = 9;

/** Exponent pairs in basis order: 1, x, y, x^2, y^2, xy, x^2y, xy^2, x^2y^2. */
const std::array<std::array<int, 2>, kBasisSize>& basis_exponents();

/** Term names with the given variable names, e.g. ("u1", "u2") -> "u1u2". */
std::vector<std::string> basis_names(const std::string& x, const std::string& y);

/** Feature matrix (one row per point) of the monomial basis. */
Matrix basis_matrix(const Matrix& xy);

struct SparseModel {
  Vector coeffs;
  std::vector<bool> active_mask;
  double rss = 0.0;
  long n_points = 0;
  double aic = 0.0;
  double lambda = 0.0;
  bool all_pruned = false;

  long n_active() const;
};

/** n ln(rss / n) + 2 k; rss == 0 maps to a large negative sentinel. */
double aic_score(double rss, long n_points, long k_active);

/**
 * Sequential thresholded ridge regression on unit-norm columns: ridge solve
 * on the active columns, drop |normalized coefficient| < threshold, repeat
 * until the mask is fixed.  Coefficients are reported in original units.
 */
SparseModel strridge_fit(const Matrix& x, const Vector& y, double lambda_ridge, double threshold,
                         long max_iters = 20);
SparseModel strridge_fit(const Matrix& x, const Vector& y, double lambda_ridge, double threshold,
                         long max_iters, const std::vector<bool>& initial_mask);

inline constexpr double kStrRidgePenalty = 1e-6;

/** Index of the lowest positive AIC, or of the lowest AIC when none is positive. */
std::size_t select_by_aic(const std::vector<SparseModel>& models);

struct LambdaRow {
  double lambda;
  long n_active;             // of the most common term set at this lambda
  std::string terms;         // that term set
  double error;              // mean RMS residual over trajectories
  double mean_aic;
  double percent_consensus;  // share of trajectories with that term set
};

struct RecoveryReport {
  std::vector<std::string> term_names;
  std::vector<LambdaRow> rows;
  /** Per trajectory: one model per lambda, and the selected index. */
  std::vector<std::vector<SparseModel>> models;
  std::vector<std::size_t> selected;
  /** Most common selected term set, its share and mean coefficients. */
  std::string consensus_terms;
  double percent_consensus = 0.0;
  Vector consensus_coeffs;
  /** Selected model with the lowest AIC among those with the consensus terms. */
  SparseModel best;
};

std::vector<double> lv_default_lambdas();
/** 10 log-spaced values on [0.005, 0.5]. */
std::vector<double> seir_default_lambdas();

RecoveryReport recover_equations(const Chain& chain, const UdeSpec& spec,
                                 const std::vector<double>& lambdas);

/** Comma-separated names of the active terms. */
std::string describe_terms(const SparseModel& model, const std::vector<std::string>& names);

}  // namespace bnode

#endif  // BNODE_UDE_HPP
