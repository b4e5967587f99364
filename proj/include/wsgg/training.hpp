#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wsgg/fusion.hpp"
#include "wsgg/grounder.hpp"
#include "wsgg/losses.hpp"
#include "wsgg/rng.hpp"
#include "wsgg/teachers.hpp"
#include "wsgg/types.hpp"

namespace wsgg {

struct TeacherToggles {
  bool object = true;
  bool interaction = true;

  bool any() const { return object || interaction; }
  bool both() const { return object && interaction; }
};

struct TrainConfig {
  double margin_alpha1 = 0.2;   // MIL triplet margin
  double margin_alpha2 = 0.2;   // adaptor triplet margin
  double learning_rate = 1e-3;
  int batch_size = 8;
  int epochs = 10;
  std::uint64_t seed = 0;
  int top_k = 3;
  int hidden_dim = 512;  // d_h
  int embed_dim = 512;   // d
  FusionStrategy fusion = FusionStrategy::average;
  TeacherToggles teachers;
  double interaction_temperature = 1.0;
  // λ multiplies the adaptor loss; -1 derives it from the strategy
  // (1 iff self-guided). An explicit value must agree with the strategy.
  int lambda_adaptor = -1;

  int lambda() const;
  void validate() const;
};

// One image-caption pair with every provider resolved.
struct TrainingPair {
  const ImageRecord* image = nullptr;
  const UnlocalizedSceneGraph* graph = nullptr;
  const Mat* embeddings = nullptr;  // N_e x d_e

  int num_entities() const { return static_cast<int>(graph->entities.size()); }
};

// Joins images, graphs and providers by image_id and checks coverage.
// Pairs with no entities or no proposals are dropped (counted in skipped).
struct TrainingSet {
  std::vector<TrainingPair> pairs;
  int skipped = 0;

  static TrainingSet build(const std::vector<ImageRecord>& images,
                           const std::vector<UnlocalizedSceneGraph>& graphs,
                           const EntityEmbeddingTable& embeddings, const TrainConfig& config,
                           const ActivationMapTable* activations, const ExpertCache* expert);
};

// Parameter-independent teacher state, built once per dataset: the raw
// teacher targets and, for the expert strategy, the precomputed weights.
struct TeacherTable {
  struct PairTargets {
    std::vector<TargetDistribution> object;
    std::vector<TargetDistribution> interaction;
    std::vector<TeacherWeights> expert_weights;
  };
  std::vector<PairTargets> per_pair;
};

TeacherTable build_teacher_table(const TrainingSet& set, const SynonymMatcher& matcher,
                                 const ActivationMapTable* activations, const ExpertCache* expert,
                                 const TrainConfig& config);

// Detached per-step state: fused targets and adaptor training samples.
// Holding these fixed makes the step loss a pure function of the
// parameters, which is what the finite-difference checks perturb.
struct StepContext {
  struct PairContext {
    std::vector<TargetDistribution> fused;
    std::vector<AdaptorTuple> adaptor_tuples;
  };
  std::vector<PairContext> per_pair;
};

StepContext prepare_step_context(const TrainingSet& set, const std::vector<int>& batch,
                                 const TeacherTable& teachers, const GrounderParams& params,
                                 const AdaptorParams& adaptor, const TrainConfig& config,
                                 Rng& negative_rng);

struct StepLosses {
  double mil = 0.0;
  double kd = 0.0;
  double adp = 0.0;
  double total = 0.0;
};

// Losses and (optionally) gradients for one mini-batch given a fixed
// context. Gradient containers must be zero-filled by the caller.
StepLosses step_losses(const TrainingSet& set, const std::vector<int>& batch,
                       const StepContext& ctx, const GrounderParams& params,
                       const AdaptorParams& adaptor, const TrainConfig& config,
                       GrounderParams* grads, AdaptorParams* adaptor_grads);

struct EpochLog {
  int epoch = 0;
  double mil = 0.0;
  double kd = 0.0;
  double adp = 0.0;
  double total = 0.0;
};

struct TrainResult {
  GrounderParams params;
  AdaptorParams adaptor;
  std::vector<EpochLog> log;  // per-epoch means over batches
};

TrainResult train_grounder(const std::vector<ImageRecord>& images,
                           const std::vector<UnlocalizedSceneGraph>& graphs,
                           const EntityEmbeddingTable& embeddings,
                           const ActivationMapTable& activations, const ExpertCache* expert,
                           const SynonymMatcher& matcher, const TrainConfig& config);

// Fraction of entities whose argmax proposal matches the known alignment.
double grounding_top1_accuracy(const GrounderParams& params, const TrainingSet& set,
                               const std::vector<AlignmentRecord>& alignments);

std::string training_log_csv(const std::vector<EpochLog>& log);

}  // namespace wsgg
