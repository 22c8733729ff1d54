#ifndef BNODE_OPTIM_HPP
#define BNODE_OPTIM_HPP

#include "bnode/common.hpp"

namespace bnode {

/** ADAM in ascent form: step(x, g) moves x along +g. */
class Adam {
public:
  explicit Adam(Index dim, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(Vector& x, const Vector& grad, double lr);
  long iterations() const { return t_; }

private:
  Vector m_;
  Vector v_;
  double beta1_;
  double beta2_;
  double eps_;
  long t_ = 0;
};

/** lr * 0.5 (1 + cos(pi * step / total)). */
double cosine_lr(double lr, long step, long total);

}  // namespace bnode

#endif  // BNODE_OPTIM_HPP
