#ifndef BNODE_ODE_HPP
#define BNODE_ODE_HPP

#include <iosfwd>
#include <string>
#include <vector>

#include "bnode/common.hpp"
#include "bnode/tape.hpp"

namespace bnode {

/**
 * Uniform integration grid on [t0, t1] with `n_steps` steps and a list of
 * save times.  Save times are snapped to the nearest step boundary on
 * construction, so every saved state is an exact integrator state.
 */
class TimeGrid {
public:
  TimeGrid(double t0, double t1, long n_steps, std::vector<double> save_at);
  /** One step on [0, 1] saving only t = 0. */
  TimeGrid() : TimeGrid(0.0, 1.0, 1, {0.0}) {}

  /** `n_save` evenly spaced save points including both endpoints. */
  static TimeGrid uniform(double t0, double t1, long n_steps, long n_save);

  double t0() const { return t0_; }
  double t1() const { return t1_; }
  long n_steps() const { return n_steps_; }
  double dt() const { return (t1_ - t0_) / static_cast<double>(n_steps_); }
  const std::vector<double>& save_at() const { return save_at_; }
  const std::vector<long>& save_steps() const { return save_steps_; }
  std::size_t n_save() const { return save_at_.size(); }

  /** Same span and save times with `factor` times as many steps. */
  TimeGrid refined(long factor) const;

  bool operator==(const TimeGrid&) const = default;

private:
  double t0_;
  double t1_;
  long n_steps_;
  std::vector<double> save_at_;
  std::vector<long> save_steps_;
};

struct Trajectory {
  TimeGrid grid;
  std::vector<Vector> states;

  Index dim() const { return states.empty() ? 0 : states.front().size(); }
  /** Throws DimMismatch / NonFiniteState when the invariants do not hold. */
  void validate() const;
};

/** Classical RK4 update u + dt/6 (k1 + 2 k2 + 2 k3 + k4). */
template <class V, class Rhs>
V rk4_step(const Rhs& rhs, double t, const V& u, double dt) {
  const double half = 0.5 * dt;
  const V k1 = rhs(t, u);
  if (!all_finite(k1)) throw NonFiniteState("non-finite RK4 stage k1", -1);
  const V k2 = rhs(t + half, V(u + half * k1));
  if (!all_finite(k2)) throw NonFiniteState("non-finite RK4 stage k2", -1);
  const V k3 = rhs(t + half, V(u + half * k2));
  if (!all_finite(k3)) throw NonFiniteState("non-finite RK4 stage k3", -1);
  const V k4 = rhs(t + dt, V(u + dt * k3));
  if (!all_finite(k4)) throw NonFiniteState("non-finite RK4 stage k4", -1);
  V out = u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!all_finite(out)) throw NonFiniteState("non-finite RK4 update", -1);
  return out;
}

/**
 * States at every save point of `grid`, stepping with rk4_step.  Works for
 * plain vectors and for tape variables.  Integration stops after the last
 * save point.
 */
template <class V, class Rhs>
std::vector<V> integrate_states(const Rhs& rhs, const V& u0, const TimeGrid& grid) {
  std::vector<V> out;
  out.reserve(grid.n_save());
  const auto& steps = grid.save_steps();
  auto next = steps.begin();
  const double dt = grid.dt();
  V u = u0;
  for (long k = 0;; ++k) {
    while (next != steps.end() && *next == k) {
      out.push_back(u);
      ++next;
    }
    if (next == steps.end() || k >= grid.n_steps()) break;
    try {
      u = rk4_step(rhs, grid.t0() + static_cast<double>(k) * dt, u, dt);
    } catch (const NonFiniteState& e) {
      throw NonFiniteState(std::string(e.what()) + " at step " + std::to_string(k), k);
    }
  }
  return out;
}

template <class Rhs>
Trajectory integrate(const Rhs& rhs, const Vector& u0, const TimeGrid& grid) {
  return Trajectory{grid, integrate_states<Vector>(rhs, u0, grid)};
}

/** CSV with header `t,u1,...,ud`, 17 significant digits. */
void write_trajectory_csv(std::ostream& os, const Trajectory& traj);
void write_trajectory_csv(const std::string& path, const Trajectory& traj);
/** Reads save times and states; the grid is rebuilt with `n_steps`. */
Trajectory read_trajectory_csv(const std::string& path, long n_steps);

}  // namespace bnode

#endif  // BNODE_ODE_HPP
