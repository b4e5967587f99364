#include "wsgg/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "wsgg/kernels.hpp"

namespace wsgg {

double caption_image_score(const Mat& a, ScoreCache* cache) {
  if (a.rows < 1 || a.cols < 1) throw std::invalid_argument("caption_image_score: empty matrix");
  if (cache) {
    cache->argmax.assign(a.rows, 0);
    cache->sig.assign(a.rows, 0.0);
  }
  double total = 0.0;
  for (int i = 0; i < a.rows; ++i) {
    const double* r = a.row(i);
    int best = 0;
    for (int j = 1; j < a.cols; ++j) {
      if (r[j] > r[best]) best = j;
    }
    const double s = kernels::sigmoid(r[best]);
    total += s;
    if (cache) {
      cache->argmax[i] = best;
      cache->sig[i] = s;
    }
  }
  return total / a.rows;
}

void caption_image_score_backward(const Mat& a, const ScoreCache& cache, double grad_score,
                                  Mat& grad_a) {
  if (static_cast<int>(cache.argmax.size()) != a.rows || !grad_a.same_shape(a)) {
    throw std::invalid_argument("caption_image_score_backward: cache/shape mismatch");
  }
  const double per_row = grad_score / a.rows;
  for (int i = 0; i < a.rows; ++i) {
    const double s = cache.sig[i];
    grad_a(i, cache.argmax[i]) += per_row * s * (1.0 - s);
  }
}

double mil_loss(double positive_score, const std::vector<double>& negative_scores, double margin) {
  if (margin <= 0.0) throw std::invalid_argument("mil_loss: margin must be positive");
  double loss = 0.0;
  for (double neg : negative_scores) {
    loss += std::max(0.0, neg - positive_score + margin);
  }
  return loss;
}

namespace {

double kd_loss_impl(const std::vector<TargetDistribution>& fused_targets, const Mat& a,
                    Mat* grad_a) {
  if (static_cast<int>(fused_targets.size()) != a.rows) {
    throw std::invalid_argument("kd_loss: one target per similarity row required");
  }
  Mat p;
  kernels::softmax_rows(a, p);
  double loss = 0.0;
  for (int i = 0; i < a.rows; ++i) {
    const TargetDistribution& q = fused_targets[i];
    if (!q.defined) continue;
    if (static_cast<int>(q.values.size()) != a.cols) {
      throw std::invalid_argument("kd_loss: target length != proposal count");
    }
    for (int j = 0; j < a.cols; ++j) {
      const double qj = q.values[j];
      if (qj > 0.0) loss += qj * std::log(qj / p(i, j));
      if (grad_a) (*grad_a)(i, j) += p(i, j) - qj;
    }
  }
  return loss;
}

}  // namespace

double kd_loss(const std::vector<TargetDistribution>& fused_targets, const Mat& a) {
  return kd_loss_impl(fused_targets, a, nullptr);
}

double kd_loss_and_grad(const std::vector<TargetDistribution>& fused_targets, const Mat& a,
                        Mat& grad_a) {
  if (!grad_a.same_shape(a)) throw std::invalid_argument("kd_loss_and_grad: grad shape mismatch");
  return kd_loss_impl(fused_targets, a, &grad_a);
}

}  // namespace wsgg
