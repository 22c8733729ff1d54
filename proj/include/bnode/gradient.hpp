#ifndef BNODE_GRADIENT_HPP
#define BNODE_GRADIENT_HPP

#include <cmath>
#include <functional>

#include "bnode/common.hpp"
#include "bnode/tape.hpp"

namespace bnode {

struct GradRecord {
  double value = 0.0;
  Vector grad;

  bool finite() const { return std::isfinite(value) && grad.allFinite(); }
};

/** Scalar objective recorded on a tape as a function of a parameter node. */
using TapeObjective = std::function<ad::Var(ad::Tape&, const ad::Var&)>;

/**
 * Value and exact reverse-mode gradient of `objective` at `params`.
 * The objective may run mlp_forward and integrate_states on the tape; the
 * gradient is that of the discretized computation.  NonFiniteState from
 * the objective propagates; a non-finite gradient raises NonFiniteGradient.
 */
GradRecord grad_through_integrator(const TapeObjective& objective, const Vector& params);

}  // namespace bnode

#endif  // BNODE_GRADIENT_HPP
