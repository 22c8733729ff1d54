#include "bnode/ode.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace bnode {

TimeGrid::TimeGrid(double t0, double t1, long n_steps, std::vector<double> save_at)
    : t0_(t0), t1_(t1), n_steps_(n_steps) {
  if (!(t1 > t0)) throw ConfigError("time grid needs t1 > t0");
  if (n_steps < 1) throw ConfigError("time grid needs n_steps >= 1");
  if (save_at.empty()) throw ConfigError("time grid needs at least one save point");
  const double h = dt();
  long previous = -1;
  for (double t : save_at) {
    if (t < t0 - 1e-12 * std::abs(t1 - t0) || t > t1 + 1e-12 * std::abs(t1 - t0))
      throw ConfigError("save point " + std::to_string(t) + " outside [t0, t1]");
    const long k = std::lround((t - t0) / h);
    if (k <= previous) throw ConfigError("save points must be strictly increasing on the step grid");
    previous = k;
    save_steps_.push_back(k);
    save_at_.push_back(k == n_steps ? t1 : t0 + static_cast<double>(k) * h);
  }
}

TimeGrid TimeGrid::uniform(double t0, double t1, long n_steps, long n_save) {
  if (n_save < 1) throw ConfigError("need n_save >= 1");
  std::vector<double> save;
  save.reserve(static_cast<std::size_t>(n_save));
  if (n_save == 1) {
    save.push_back(t1);
  } else {
    for (long i = 0; i < n_save; ++i)
      save.push_back(t0 + (t1 - t0) * static_cast<double>(i) / static_cast<double>(n_save - 1));
  }
  return {t0, t1, n_steps, std::move(save)};
}

TimeGrid TimeGrid::refined(long factor) const {
  if (factor < 1) throw ConfigError("refinement factor must be >= 1");
  return {t0_, t1_, n_steps_ * factor, save_at_};
}

void Trajectory::validate() const {
  if (states.size() != grid.n_save())
    throw DimMismatch("trajectory has " + std::to_string(states.size()) + " states for " +
                      std::to_string(grid.n_save()) + " save points");
  const Index d = dim();
  for (const Vector& s : states) {
    if (s.size() != d) throw DimMismatch("trajectory states differ in dimension");
    if (!s.allFinite()) throw NonFiniteState("trajectory contains non-finite entries", -1);
  }
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  os << 't';
  for (Index j = 0; j < traj.dim(); ++j) os << ",u" << (j + 1);
  os << '\n';
  char buf[40];
  for (std::size_t i = 0; i < traj.states.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", traj.grid.save_at()[i]);
    os << buf;
    for (Index j = 0; j < traj.dim(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", traj.states[i][j]);
      os << ',' << buf;
    }
    os << '\n';
  }
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path + " for writing");
  write_trajectory_csv(os, traj);
}

Trajectory read_trajectory_csv(const std::string& path, long n_steps) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path);
  std::string line;
  std::getline(is, line);
  std::vector<double> times;
  std::vector<Vector> states;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() < 2) throw Error("malformed trajectory row in " + path);
    times.push_back(row.front());
    states.push_back(Eigen::Map<Vector>(row.data() + 1, static_cast<Index>(row.size() - 1)));
  }
  if (times.size() < 2) throw Error("trajectory file " + path + " needs at least two rows");
  Trajectory traj{TimeGrid(times.front(), times.back(), n_steps, times), std::move(states)};
  traj.validate();
  return traj;
}

}  // namespace bnode
