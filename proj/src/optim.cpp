#include "bnode/optim.hpp"

#include <cmath>
#include <numbers>

namespace bnode {

Adam::Adam(Index dim, double beta1, double beta2, double eps)
    : m_(Vector::Zero(dim)), v_(Vector::Zero(dim)), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(Vector& x, const Vector& grad, double lr) {
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  x.array() += lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

double cosine_lr(double lr, long step, long total) {
  if (total <= 0) return lr;
  const double frac = static_cast<double>(step) / static_cast<double>(total);
  return lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

}  // namespace bnode
