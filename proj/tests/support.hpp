#ifndef BNODE_TESTS_SUPPORT_HPP
#define BNODE_TESTS_SUPPORT_HPP

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "bnode/posterior.hpp"

namespace bnode::testing {

/** log N(theta; mean, cov) up to a constant. */
class GaussianTarget final : public LogDensity {
public:
  GaussianTarget(Vector mean, Matrix cov) : mean_(std::move(mean)), prec_(cov.inverse()) {}
  Index dim() const override { return mean_.size(); }
  double log_density(const Vector& theta) const override {
    const Vector d = theta - mean_;
    return -0.5 * d.dot(prec_ * d);
  }
  GradRecord log_density_grad(const Vector& theta) const override {
    return {log_density(theta), -(prec_ * (theta - mean_))};
  }

private:
  Vector mean_;
  Matrix prec_;
};

/** Central finite-difference gradient. */
template <class F>
Vector fd_gradient(const F& f, const Vector& x, double h) {
  Vector g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    Vector xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

inline Vector random_vector(Index n, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

inline std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

/** Fresh directory under the system temp dir, removed on destruction. */
class TempDir {
public:
  explicit TempDir(const std::string& name)
      : path_(std::filesystem::temp_directory_path() / ("bnode_test_" + name)) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  std::string str() const { return path_.string(); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
  std::filesystem::path path_;
};

}  // namespace bnode::testing

#endif  // BNODE_TESTS_SUPPORT_HPP
