#include "wsgg/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace wsgg {

void AdamOptimizer::step(const std::vector<ParamView>& params, const std::vector<ParamView>& grads) {
  if (params.size() != grads.size()) throw std::invalid_argument("Adam: view count mismatch");
  std::size_t total = 0;
  for (const ParamView& p : params) total += p.n;
  if (m_.empty()) {
    m_.assign(total, 0.0);
    v_.assign(total, 0.0);
  } else if (m_.size() != total) {
    throw std::invalid_argument("Adam: parameter layout changed between steps");
  }

  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);

  std::size_t off = 0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].n != grads[k].n) throw std::invalid_argument("Adam: view size mismatch");
    double* p = params[k].data;
    const double* g = grads[k].data;
    for (std::size_t i = 0; i < params[k].n; ++i) {
      m_[off + i] = beta1_ * m_[off + i] + (1.0 - beta1_) * g[i];
      v_[off + i] = beta2_ * v_[off + i] + (1.0 - beta2_) * g[i] * g[i];
      const double mhat = m_[off + i] / bc1;
      const double vhat = v_[off + i] / bc2;
      p[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
    off += params[k].n;
  }
}

}  // namespace wsgg
