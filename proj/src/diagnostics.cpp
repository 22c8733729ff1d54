#include "bnode/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace bnode {

namespace {

// Lazily computed autocovariances of a centred series.
class Autocovariance {
public:
  explicit Autocovariance(const Vector& series) : centred_(series.array() - series.mean()) {
    c0_ = centred_.squaredNorm() / static_cast<double>(centred_.size());
    if (!(c0_ > 0.0) || !std::isfinite(c0_)) throw ZeroVariance("series has zero variance");
  }

  double rho(long lag) const {
    const Index n = centred_.size();
    if (lag == 0) return 1.0;
    const Index m = n - lag;
    const double c = centred_.head(m).dot(centred_.tail(m)) / static_cast<double>(n);
    return c / c0_;
  }

private:
  Vector centred_;
  double c0_;
};

}  // namespace

Vector autocorrelation(const Vector& series, long max_lag) {
  if (max_lag < 0 || series.size() <= max_lag)
    throw DimMismatch("autocorrelation needs length > max_lag");
  const Autocovariance acov(series);
  Vector out(max_lag + 1);
  for (long l = 0; l <= max_lag; ++l) out[l] = acov.rho(l);
  return out;
}

double effective_sample_size(const Vector& series) {
  const Index n = series.size();
  if (n < 10) throw DimMismatch("effective sample size needs at least 10 values");
  const Autocovariance acov(series);
  // Initial positive sequence, made monotone so noisy tail pairs cannot
  // raise the sum.
  double sum_pairs = 0.0;
  double prev = std::numeric_limits<double>::infinity();
  for (long k = 0; 2 * k + 1 < n; ++k) {
    const double gamma = std::min(acov.rho(2 * k) + acov.rho(2 * k + 1), prev);
    if (!(gamma > 0.0)) break;
    sum_pairs += gamma;
    prev = gamma;
  }
  // 1 + 2 sum_{l>=1} rho(l) == 2 sum_k Gamma_k - 1
  const double tau = std::max(2.0 * sum_pairs - 1.0, 1.0 / 1.05);
  return static_cast<double>(n) / tau;
}

Matrix chain_matrix(const Chain& chain) {
  if (chain.samples.empty()) throw DimMismatch("chain is empty");
  const Index d = chain.samples.front().size();
  Matrix m(static_cast<Index>(chain.samples.size()), d);
  for (std::size_t i = 0; i < chain.samples.size(); ++i) {
    if (chain.samples[i].size() != d) throw DimMismatch("chain samples differ in dimension");
    m.row(static_cast<Index>(i)) = chain.samples[i].transpose();
  }
  return m;
}

ChainSummary summarize(const Chain& chain, long max_lag, long n_params) {
  const Matrix m = chain_matrix(chain);
  const Index d = n_params < 0 ? m.cols() : std::min<Index>(n_params, m.cols());
  const double n = static_cast<double>(m.rows());
  ChainSummary s;
  s.mean.resize(d);
  s.std.resize(d);
  s.ess.resize(d);
  s.autocorr.resize(d, max_lag + 1);
  s.divergences = chain.stats.divergences;
  for (Index p = 0; p < d; ++p) {
    const Vector col = m.col(p);
    s.mean[p] = col.sum() / n;
    s.std[p] = std::sqrt((col.array() - s.mean[p]).square().sum() / n);
    try {
      s.ess[p] = effective_sample_size(col);
      s.autocorr.row(p) = autocorrelation(col, max_lag).transpose();
    } catch (const ZeroVariance&) {
      s.ess[p] = std::nan("");
      s.autocorr.row(p).setConstant(std::nan(""));
      s.autocorr(p, 0) = 1.0;
    }
  }
  return s;
}

Vector map_distance_trace(const Chain& chain, const Vector& map_point) {
  Vector out(static_cast<Index>(chain.samples.size()));
  for (std::size_t i = 0; i < chain.samples.size(); ++i) {
    if (chain.samples[i].size() != map_point.size())
      throw DimMismatch("MAP point and chain samples differ in dimension");
    out[static_cast<Index>(i)] = (chain.samples[i] - map_point).norm();
  }
  return out;
}

Histogram histogram(const Vector& values) {
  if (values.size() == 0) throw DimMismatch("histogram of an empty series");
  std::vector<double> v(values.data(), values.data() + values.size());
  std::sort(v.begin(), v.end());
  double lo = v.front();
  double hi = v.back();
  if (hi == lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  long bins = 50;
  if (v.size() < 100) {
    auto quantile = [&](double q) {
      const double pos = q * static_cast<double>(v.size() - 1);
      const std::size_t i = static_cast<std::size_t>(pos);
      const double frac = pos - static_cast<double>(i);
      return i + 1 < v.size() ? v[i] * (1.0 - frac) + v[i + 1] * frac : v[i];
    };
    const double iqr = quantile(0.75) - quantile(0.25);
    const double width = 2.0 * iqr / std::cbrt(static_cast<double>(v.size()));
    bins = width > 0.0 ? std::max<long>(1, std::lround(std::ceil((hi - lo) / width))) : 1;
  }
  Histogram h;
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (long b = 0; b <= bins; ++b) h.edges.push_back(lo + width * static_cast<double>(b));
  for (double x : v) {
    long b = static_cast<long>((x - lo) / width);
    b = std::clamp<long>(b, 0, bins - 1);
    ++h.counts[static_cast<std::size_t>(b)];
  }
  for (long c : h.counts)
    h.density.push_back(static_cast<double>(c) / (static_cast<double>(v.size()) * width));
  return h;
}

}  // namespace bnode
