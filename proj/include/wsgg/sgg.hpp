#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wsgg/grounder.hpp"
#include "wsgg/rng.hpp"
#include "wsgg/types.hpp"

namespace wsgg {

struct SggConfig {
  double learning_rate = 1e-2;
  int epochs = 20;
  std::uint64_t seed = 0;
  int hidden_dim = 64;
  int background_ratio = 3;  // background pairs sampled per labeled pair
  int top_triplets = 100;

  void validate() const;
};

// Minimal fully-supervised SGG stand-in: an affine object classifier over
// proposal features and a two-layer predicate classifier over
// concat(subject feature, object feature, pair geometry). The last
// predicate index is the background class.
struct SggParams {
  LabelSpaces labels;
  int feature_dim = 0;
  int hidden_dim = 0;
  std::uint64_t seed = 0;
  DenseLayer object_head;
  Mlp2 predicate_mlp;

  static SggParams init(const LabelSpaces& labels, int feature_dim, int hidden_dim,
                        std::uint64_t seed);
  static SggParams zeros_like(const SggParams& other);

  int num_objects() const { return static_cast<int>(labels.objects.size()); }
  int num_predicates() const { return static_cast<int>(labels.predicates.size()); }
  int background_index() const { return num_predicates(); }
};

std::vector<ParamView> param_views(SggParams& p);

// Normalized center offset, log size ratios and IoU of the pair.
std::vector<double> pair_geometry(const Box& subject, const Box& object, double image_w,
                                  double image_h);
constexpr int kGeometryDim = 5;

// One step's candidate draw: a box per entity, and per edge the
// subject/object proposals after collision handling, or (-1, -1) when every
// candidate of the object collides and the edge skips this step.
struct StepDraw {
  std::vector<int> entity_boxes;
  std::vector<std::pair<int, int>> edge_boxes;
};

StepDraw draw_step_boxes(const PseudoSceneGraph& graph, Rng& rng);

struct SggEpochLog {
  int epoch = 0;
  double object_loss = 0.0;
  double predicate_loss = 0.0;
  double total = 0.0;
};

struct SggTrainResult {
  SggParams params;
  std::vector<SggEpochLog> log;
  int skipped_entities = 0;  // lemma not in the object label space
  int skipped_edges = 0;     // unknown predicate or unresolvable collision
};

SggTrainResult sgg_train(const std::vector<PseudoSceneGraph>& pseudo,
                         const std::vector<ImageRecord>& images, const LabelSpaces& labels,
                         const SggConfig& config);

// SGDet inference: label every proposal, score every ordered pair with its
// best non-background predicate, rank triplets by score product and keep
// the top ones. Ties break on (subject, object, predicate) ascending.
SceneGraphPrediction sgg_predict(const ImageRecord& image, const SggParams& params,
                                 int top_triplets = 100);

void write_sgg_checkpoint(const std::string& path, const SggParams& params);
SggParams read_sgg_checkpoint(const std::string& path);

std::string sgg_log_csv(const std::vector<SggEpochLog>& log);

}  // namespace wsgg
