#include "wsgg/fusion.hpp"

#include <cmath>
#include <stdexcept>

#include "wsgg/rng.hpp"

namespace wsgg {

namespace {

constexpr double kWeightSumTolerance = 1e-9;

// Softmax over two scores.
TeacherWeights softmax_pair(double sim_object, double sim_interaction) {
  const double mx = std::max(sim_object, sim_interaction);
  const double eo = std::exp(sim_object - mx);
  const double er = std::exp(sim_interaction - mx);
  return {eo / (eo + er), er / (eo + er)};
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) throw std::invalid_argument("cosine: zero-norm embedding");
  return dot(a, b) / (na * nb);
}

void check_defined_pair(const TargetDistribution& object_target,
                        const TargetDistribution& interaction_target) {
  if (!object_target.defined && !interaction_target.defined) {
    throw std::invalid_argument("reweight: at least one teacher target must be defined");
  }
}

}  // namespace

AdaptorParams AdaptorParams::init(int d, std::uint64_t seed) {
  if (d < 1) throw std::invalid_argument("AdaptorParams::init: d must be positive");
  Rng rng(substream_seed(seed, "adaptor-init"));
  AdaptorParams a;
  a.w.resize(2 * static_cast<std::size_t>(d));
  const double bound = 1.0 / std::sqrt(2.0 * d);
  for (double& v : a.w) v = (2.0 * rng.next_double() - 1.0) * bound;
  a.b = 0.0;
  return a;
}

AdaptorParams AdaptorParams::zeros_like(const AdaptorParams& other) {
  AdaptorParams z;
  z.w.assign(other.w.size(), 0.0);
  z.b = 0.0;
  return z;
}

std::vector<ParamView> param_views(AdaptorParams& a) {
  std::vector<ParamView> views;
  views.push_back({"adaptor.w", a.w.data(), a.w.size()});
  views.push_back({"adaptor.b", &a.b, 1});
  return views;
}

FusionStrategy fusion_strategy_from_string(const std::string& s) {
  if (s == "average") return FusionStrategy::average;
  if (s == "expert") return FusionStrategy::expert;
  if (s == "self") return FusionStrategy::self;
  throw std::invalid_argument("unknown fusion strategy '" + s + "' (want average|expert|self)");
}

std::string to_string(FusionStrategy s) {
  switch (s) {
    case FusionStrategy::average: return "average";
    case FusionStrategy::expert: return "expert";
    case FusionStrategy::self: return "self";
  }
  return "average";
}

std::vector<double> attended_feature(const TargetDistribution& target, const Mat& v) {
  if (!target.defined) throw std::invalid_argument("attended_feature: undefined target");
  if (static_cast<int>(target.values.size()) != v.rows) {
    throw std::invalid_argument("attended_feature: target length != proposal count");
  }
  std::vector<double> out(v.cols, 0.0);
  for (int j = 0; j < v.rows; ++j) {
    const double w = target.values[j];
    if (w == 0.0) continue;
    const double* r = v.row(j);
    for (int k = 0; k < v.cols; ++k) out[k] += w * r[k];
  }
  return out;
}

TeacherWeights expert_reweight(const TargetDistribution& object_target,
                               const TargetDistribution& interaction_target,
                               const Mat& proposal_embeddings,
                               std::span<const double> prompt_embedding) {
  check_defined_pair(object_target, interaction_target);
  if (!object_target.defined) return {0.0, 1.0};
  if (!interaction_target.defined) return {1.0, 0.0};

  std::vector<double> vo = attended_feature(object_target, proposal_embeddings);
  std::vector<double> vr = attended_feature(interaction_target, proposal_embeddings);
  const double sim_o = cosine(vo, prompt_embedding);
  const double sim_r = cosine(vr, prompt_embedding);
  return softmax_pair(sim_o, sim_r);
}

double adaptor_score(const AdaptorParams& adaptor, std::span<const double> v_tilde,
                     std::span<const double> h) {
  if (v_tilde.size() + h.size() != adaptor.w.size()) {
    throw std::invalid_argument("adaptor_score: input widths do not match adaptor");
  }
  double acc = adaptor.b;
  for (std::size_t k = 0; k < v_tilde.size(); ++k) acc += adaptor.w[k] * v_tilde[k];
  for (std::size_t k = 0; k < h.size(); ++k) acc += adaptor.w[v_tilde.size() + k] * h[k];
  return acc;
}

TeacherWeights self_reweight(const TargetDistribution& object_target,
                             const TargetDistribution& interaction_target,
                             std::span<const double> h_row, const Mat& v,
                             const AdaptorParams& adaptor) {
  check_defined_pair(object_target, interaction_target);
  if (!object_target.defined) return {0.0, 1.0};
  if (!interaction_target.defined) return {1.0, 0.0};

  std::vector<double> vo = attended_feature(object_target, v);
  std::vector<double> vr = attended_feature(interaction_target, v);
  const double sim_o = adaptor_score(adaptor, vo, h_row);
  const double sim_r = adaptor_score(adaptor, vr, h_row);
  return softmax_pair(sim_o, sim_r);
}

double adaptor_loss(const std::vector<double>& positive_sims,
                    const std::vector<std::vector<double>>& negative_sims, double margin) {
  if (margin <= 0.0) throw std::invalid_argument("adaptor_loss: margin must be positive");
  if (positive_sims.size() != negative_sims.size()) {
    throw std::invalid_argument("adaptor_loss: positive/negative list length mismatch");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < positive_sims.size(); ++i) {
    for (double neg : negative_sims[i]) {
      loss += std::max(0.0, neg - positive_sims[i] + margin);
    }
  }
  return loss;
}

double adaptor_loss_and_grad(const std::vector<AdaptorTuple>& tuples, const AdaptorParams& adaptor,
                             double margin, AdaptorParams* grad) {
  if (margin <= 0.0) throw std::invalid_argument("adaptor_loss_and_grad: margin must be positive");
  double loss = 0.0;
  for (const AdaptorTuple& t : tuples) {
    const double sim_neg = adaptor_score(adaptor, t.v_negative, t.h);
    auto hinge = [&](const std::vector<double>& v_pos) {
      const double sim_pos = adaptor_score(adaptor, v_pos, t.h);
      const double val = sim_neg - sim_pos + margin;
      if (val <= 0.0) return 0.0;
      if (grad) {
        // d(sim_neg) = +1, d(sim_pos) = -1; inputs are constants.
        const std::size_t d = t.h.size();
        for (std::size_t k = 0; k < d; ++k) {
          grad->w[k] += t.v_negative[k] - v_pos[k];
        }
        // Both scores share the same h block and bias; they cancel.
      }
      return val;
    };
    if (t.object_defined) loss += hinge(t.v_object);
    if (t.interaction_defined) loss += hinge(t.v_interaction);
  }
  return loss;
}

TargetDistribution fuse_targets(const TargetDistribution& object_target,
                                const TargetDistribution& interaction_target,
                                const TeacherWeights& weights) {
  if (weights.object < 0.0 || weights.interaction < 0.0 ||
      std::abs(weights.object + weights.interaction - 1.0) > kWeightSumTolerance) {
    throw std::invalid_argument("fuse_targets: weights must be nonnegative and sum to 1");
  }
  if (weights.object > 0.0 && !object_target.defined) {
    throw std::invalid_argument("fuse_targets: object teacher weighted but undefined");
  }
  if (weights.interaction > 0.0 && !interaction_target.defined) {
    throw std::invalid_argument("fuse_targets: interaction teacher weighted but undefined");
  }
  const std::size_t n = weights.object > 0.0 ? object_target.values.size()
                                             : interaction_target.values.size();
  TargetDistribution fused;
  fused.source = TargetSource::fused;
  fused.defined = true;
  fused.values.assign(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double v = 0.0;
    if (weights.object > 0.0) v += weights.object * object_target.values[j];
    if (weights.interaction > 0.0) v += weights.interaction * interaction_target.values[j];
    fused.values[j] = v;
  }
  return fused;
}

TeacherWeights average_weights(const TargetDistribution& object_target,
                               const TargetDistribution& interaction_target) {
  check_defined_pair(object_target, interaction_target);
  if (!object_target.defined) return {0.0, 1.0};
  if (!interaction_target.defined) return {1.0, 0.0};
  return {0.5, 0.5};
}

}  // namespace wsgg
