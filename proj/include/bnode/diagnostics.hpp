#ifndef BNODE_DIAGNOSTICS_HPP
#define BNODE_DIAGNOSTICS_HPP

#include <vector>

#include "bnode/common.hpp"
#include "bnode/mcmc.hpp"

namespace bnode {

class ZeroVariance : public Error {
public:
  using Error::Error;
};

/** rho(l) = c(l) / c(0) with the biased (1/n) autocovariance, l = 0..max_lag. */
Vector autocorrelation(const Vector& series, long max_lag);

/** n / (1 + 2 sum rho(l)), truncated by Geyer's initial positive sequence. */
double effective_sample_size(const Vector& series);

struct ChainSummary {
  Vector mean;
  Vector std;
  Vector ess;
  /** Row p holds the autocorrelation of parameter p at lags 0..max_lag. */
  Matrix autocorr;
  long divergences = 0;
};

/** Column p of the result is the trace of parameter p. */
Matrix chain_matrix(const Chain& chain);

/** Summaries of the first `n_params` parameters (all when negative). */
ChainSummary summarize(const Chain& chain, long max_lag, long n_params = -1);

/** Euclidean distance of every sample from `map_point`. */
Vector map_distance_trace(const Chain& chain, const Vector& map_point);

struct Histogram {
  std::vector<double> edges;
  std::vector<long> counts;
  /** counts normalized to integrate to one. */
  std::vector<double> density;
};

/** 50 equal bins; Freedman-Diaconis bin width for fewer than 100 values. */
Histogram histogram(const Vector& values);

}  // namespace bnode

#endif  // BNODE_DIAGNOSTICS_HPP
