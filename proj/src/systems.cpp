#include "bnode/systems.hpp"

#include <random>

namespace bnode {

namespace {

double require(const std::map<std::string, double>& params, const std::string& key) {
  auto it = params.find(key);
  if (it == params.end()) throw ConfigError("system parameter '" + key + "' is missing");
  return it->second;
}

}  // namespace

SystemKind parse_system_kind(const std::string& name) {
  if (name == "spiral") return SystemKind::Spiral;
  if (name == "lotka_volterra") return SystemKind::LotkaVolterra;
  if (name == "seir") return SystemKind::Seir;
  throw ConfigError("unknown system kind '" + name + "'");
}

std::string to_string(SystemKind kind) {
  switch (kind) {
    case SystemKind::Spiral:
      return "spiral";
    case SystemKind::LotkaVolterra:
      return "lotka_volterra";
    case SystemKind::Seir:
      break;
  }
  return "seir";
}

std::map<std::string, double> SystemSpec::default_params(SystemKind kind) {
  switch (kind) {
    case SystemKind::Spiral:
      return {{"alpha", 0.1}, {"beta", 2.0}};
    case SystemKind::LotkaVolterra:
      return {{"alpha", 1.5}, {"beta", 1.0}, {"gamma", 3.0}, {"delta", 1.0}};
    case SystemKind::Seir:
      break;
  }
  return {{"beta", 0.5}, {"sigma", 0.1}, {"gamma", 0.1}};
}

Index SystemSpec::state_dim() const { return kind == SystemKind::Seir ? 4 : 2; }

SpiralParams SystemSpec::spiral() const {
  return {require(params, "alpha"), require(params, "beta")};
}

LotkaVolterraParams SystemSpec::lotka_volterra() const {
  return {require(params, "alpha"), require(params, "beta"), require(params, "gamma"),
          require(params, "delta")};
}

SeirParams SystemSpec::seir() const {
  return {require(params, "beta"), require(params, "sigma"), require(params, "gamma")};
}

void SystemSpec::validate() const {
  switch (kind) {
    case SystemKind::Spiral:
      (void)spiral();
      break;
    case SystemKind::LotkaVolterra:
      (void)lotka_volterra();
      break;
    case SystemKind::Seir:
      (void)seir();
      break;
  }
  for (const auto& [key, value] : params) {
    const auto defaults = default_params(kind);
    if (!defaults.contains(key))
      throw ConfigError("parameter '" + key + "' does not apply to system " + to_string(kind));
    if (!std::isfinite(value)) throw ConfigError("parameter '" + key + "' is not finite");
  }
  if (u0.size() != state_dim())
    throw ConfigError("u0 has length " + std::to_string(u0.size()) + ", system needs " +
                      std::to_string(state_dim()));
  if (!u0.allFinite()) throw ConfigError("u0 must be finite");
  if (kind != SystemKind::Spiral && (u0.array() < 0.0).any())
    throw ConfigError("initial state entries must be nonnegative for " + to_string(kind));
  if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be >= 0");
  if (refine < 1) throw ConfigError("refine must be >= 1");
}

Vector system_rhs(const SystemSpec& spec, const Vector& u) {
  switch (spec.kind) {
    case SystemKind::Spiral:
      return rhs_spiral(spec.spiral(), u);
    case SystemKind::LotkaVolterra:
      return rhs_lotka_volterra(spec.lotka_volterra(), u);
    case SystemKind::Seir:
      break;
  }
  return rhs_seir(spec.seir(), u);
}

Dataset generate_dataset(const SystemSpec& spec, std::uint64_t seed) {
  spec.validate();
  const TimeGrid fine = spec.grid.refined(spec.refine);
  Trajectory truth;
  switch (spec.kind) {
    case SystemKind::Spiral: {
      const SpiralParams p = spec.spiral();
      truth = integrate([&](double, const Vector& u) { return rhs_spiral(p, u); }, spec.u0, fine);
      break;
    }
    case SystemKind::LotkaVolterra: {
      const LotkaVolterraParams p = spec.lotka_volterra();
      truth = integrate([&](double, const Vector& u) { return rhs_lotka_volterra(p, u); },
                        spec.u0, fine);
      break;
    }
    case SystemKind::Seir: {
      const SeirParams p = spec.seir();
      truth = integrate([&](double, const Vector& u) { return rhs_seir(p, u); }, spec.u0, fine);
      break;
    }
  }
  truth.grid = spec.grid;
  Trajectory observed = truth;
  if (spec.noise_sigma > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);
    for (Vector& s : observed.states)
      for (Index j = 0; j < s.size(); ++j) s[j] += noise(rng);
  }
  return Dataset{std::move(truth), std::move(observed), spec, seed};
}

}  // namespace bnode
