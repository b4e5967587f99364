#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "wsgg/grounder.hpp"
#include "wsgg/mat.hpp"
#include "wsgg/types.hpp"

namespace wsgg {

// Reliability head: affine map from concat(attended visual feature, entity
// text feature) to a scalar score. Gradients reach these weights only; the
// feature inputs are treated as constants.
struct AdaptorParams {
  std::vector<double> w;  // length 2d
  double b = 0.0;

  static AdaptorParams init(int d, std::uint64_t seed);
  static AdaptorParams zeros_like(const AdaptorParams& other);
};

std::vector<ParamView> param_views(AdaptorParams& a);

enum class FusionStrategy { average, expert, self };

FusionStrategy fusion_strategy_from_string(const std::string& s);
std::string to_string(FusionStrategy s);

struct TeacherWeights {
  double object = 0.0;
  double interaction = 0.0;
};

// ṽ = Vᵀ·â — convex combination of encoded proposal rows under the target.
std::vector<double> attended_feature(const TargetDistribution& target, const Mat& v);

// Expert embeddings for one image: cropped-box visual embeddings per
// proposal and prompt-sentence text embeddings per entity, shared space d_c.
struct ExpertEmbeddings {
  Mat proposal_embeddings;      // N_v x d_c
  Mat entity_prompt_embeddings; // N_e x d_c
};

// Keyed by image_id; the matching model itself lives upstream.
using ExpertCache = std::map<std::string, ExpertEmbeddings>;

// Cosine similarity between each defined teacher's expert attended feature
// and the entity prompt embedding, softmax-normalized into weights. An
// undefined teacher gets weight 0 and the other gets 1.
TeacherWeights expert_reweight(const TargetDistribution& object_target,
                               const TargetDistribution& interaction_target,
                               const Mat& proposal_embeddings,
                               std::span<const double> prompt_embedding);

// Affine reliability score on concat(v_tilde, h).
double adaptor_score(const AdaptorParams& adaptor, std::span<const double> v_tilde,
                     std::span<const double> h);

// Adaptor scores per defined teacher, softmax-normalized. v_tilde inputs are
// the caller's detached copies; no gradient flows from here.
TeacherWeights self_reweight(const TargetDistribution& object_target,
                             const TargetDistribution& interaction_target,
                             std::span<const double> h_row, const Mat& v,
                             const AdaptorParams& adaptor);

// Hinge sum: for each positive score i, every negative in negatives[i] must
// trail it by at least the margin.
double adaptor_loss(const std::vector<double>& positive_sims,
                    const std::vector<std::vector<double>>& negative_sims, double margin);

// One adaptor training sample: the entity's detached text feature, the
// defined teachers' detached attended features, and one randomly attended
// negative shared by both teachers.
struct AdaptorTuple {
  std::vector<double> h;
  std::vector<double> v_object;
  bool object_defined = false;
  std::vector<double> v_interaction;
  bool interaction_defined = false;
  std::vector<double> v_negative;
};

// Loss plus gradient accumulation into grad (adaptor parameters only).
double adaptor_loss_and_grad(const std::vector<AdaptorTuple>& tuples, const AdaptorParams& adaptor,
                             double margin, AdaptorParams* grad);

// q = w_o·â⁽ᵒ⁾ + w_r·â⁽ʳ⁾.
TargetDistribution fuse_targets(const TargetDistribution& object_target,
                                const TargetDistribution& interaction_target,
                                const TeacherWeights& weights);

// Average-strategy weights with the undefined-teacher fallback applied.
TeacherWeights average_weights(const TargetDistribution& object_target,
                               const TargetDistribution& interaction_target);

}  // namespace wsgg
