#pragma once

#include <cstddef>
#include <vector>

#include "wsgg/grounder.hpp"

namespace wsgg {

// Adam with bias correction over a fixed flattened parameter layout.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Parameter and gradient views must enumerate the same layout every call.
  void step(const std::vector<ParamView>& params, const std::vector<ParamView>& grads);

  int steps_taken() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::vector<double> m_, v_;
  int t_ = 0;
};

}  // namespace wsgg
