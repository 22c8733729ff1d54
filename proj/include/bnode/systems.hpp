#ifndef BNODE_SYSTEMS_HPP
#define BNODE_SYSTEMS_HPP

#include <cstdint>
#include <map>
#include <string>

#include "bnode/common.hpp"
#include "bnode/ode.hpp"
#include "bnode/tape.hpp"

namespace bnode {

enum class SystemKind { Spiral, LotkaVolterra, Seir };

SystemKind parse_system_kind(const std::string& name);
std::string to_string(SystemKind kind);

struct SpiralParams {
  double alpha = 0.1;
  double beta = 2.0;
};

struct LotkaVolterraParams {
  double alpha = 1.5;
  double beta = 1.0;
  double gamma = 3.0;
  double delta = 1.0;
};

struct SeirParams {
  double beta = 0.5;
  double sigma = 0.1;
  double gamma = 0.1;
};

// Right-hand sides are templates so the same code runs on plain vectors
// and on tape variables (the universal-ODE models splice them with a
// network term).

/** (-a u1^3 + b u2^3, -b u1^3 - a u2^3) */
template <class V>
V rhs_spiral(const SpiralParams& p, const V& u) {
  const auto u1 = component(u, 0);
  const auto u2 = component(u, 1);
  const auto c1 = u1 * u1 * u1;
  const auto c2 = u2 * u2 * u2;
  return pack({-p.alpha * c1 + p.beta * c2, -p.beta * c1 - p.alpha * c2});
}

/** Predator-prey with growth term +alpha u1: (a u1 - b u1 u2, -d u2 + g u1 u2). */
template <class V>
V rhs_lotka_volterra(const LotkaVolterraParams& p, const V& u) {
  const auto u1 = component(u, 0);
  const auto u2 = component(u, 1);
  const auto inter = u1 * u2;
  return pack({p.alpha * u1 - p.beta * inter, -p.delta * u2 + p.gamma * inter});
}

/** (S, E, I, R) -> (-b S I, b S I - s E, s E - g I, g I). */
template <class V>
V rhs_seir(const SeirParams& p, const V& u) {
  const auto s = component(u, 0);
  const auto e = component(u, 1);
  const auto i = component(u, 2);
  const auto infection = p.beta * (s * i);
  return pack({-1.0 * infection, infection - p.sigma * e, p.sigma * e - p.gamma * i,
               p.gamma * i});
}

struct SystemSpec {
  SystemKind kind = SystemKind::Spiral;
  std::map<std::string, double> params;
  Vector u0;
  TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 1, 2);
  double noise_sigma = 0.0;
  /** Data are generated on a grid this many times finer than `grid`. */
  long refine = 10;

  Index state_dim() const;
  /** Checks parameter presence, u0 length and sign constraints. */
  void validate() const;

  SpiralParams spiral() const;
  LotkaVolterraParams lotka_volterra() const;
  SeirParams seir() const;

  /** Default parameters for a system kind. */
  static std::map<std::string, double> default_params(SystemKind kind);
};

/** Vector field of the system as a plain function of the state. */
Vector system_rhs(const SystemSpec& spec, const Vector& u);

struct Dataset {
  Trajectory truth;
  Trajectory observed;
  SystemSpec spec;
  std::uint64_t seed = 0;
};

/** Truth on the refined grid, subsampled; observed = truth + N(0, sigma^2). */
Dataset generate_dataset(const SystemSpec& spec, std::uint64_t seed);

}  // namespace bnode

#endif  // BNODE_SYSTEMS_HPP
