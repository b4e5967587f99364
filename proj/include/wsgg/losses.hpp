#pragma once

#include <vector>

#include "wsgg/mat.hpp"
#include "wsgg/types.hpp"

namespace wsgg {

// Backward bookkeeping for the caption-image score: per-entity argmax column
// (ties to the lowest index) and the sigmoid value there.
struct ScoreCache {
  std::vector<int> argmax;
  std::vector<double> sig;
};

// S(C, I) = mean over entities of max over proposals of sigmoid(a_ij).
double caption_image_score(const Mat& a, ScoreCache* cache = nullptr);

// Distributes dLoss/dS into dLoss/dA using the cache from the forward pass.
void caption_image_score_backward(const Mat& a, const ScoreCache& cache, double grad_score,
                                  Mat& grad_a);

// Hinge over in-batch negatives: sum of max(0, S(C,I') - S(C,I) + margin).
double mil_loss(double positive_score, const std::vector<double>& negative_scores, double margin);

// Sum over defined entities of KL(q_i || softmax(a_i)), natural log.
double kd_loss(const std::vector<TargetDistribution>& fused_targets, const Mat& a);

// Also accumulates d/dA = (softmax(a_i) - q_i) on counted rows into grad_a.
double kd_loss_and_grad(const std::vector<TargetDistribution>& fused_targets, const Mat& a,
                        Mat& grad_a);

}  // namespace wsgg
