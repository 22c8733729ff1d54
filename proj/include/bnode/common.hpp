#ifndef BNODE_COMMON_HPP
#define BNODE_COMMON_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace bnode {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/** Base class of every error raised by the library. */
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/** A state or stage value became NaN/Inf during integration. */
class NonFiniteState : public Error {
public:
  NonFiniteState(std::string what, long step)
      : Error(std::move(what)), step_(step) {}
  long step() const noexcept { return step_; }

private:
  long step_;
};

class NonFiniteGradient : public Error {
public:
  using Error::Error;
};

class DimMismatch : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

/**
 * Derive an independent 64-bit seed for a named random stream from a
 * top-level seed.  Streams used by the experiment runner:
 *   1 = dataset noise, 2 = network init, 3 = sampler/fitter,
 *   4 = MAP optimizer (unused, deterministic), 5+ = per-point extras.
 */
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

void log_warning(const std::string& message);

}  // namespace bnode

#endif  // BNODE_COMMON_HPP
