#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace wsgg {

// A parsed text entity. Entities are ordered by first occurrence in the
// caption and edges reference positional indices, so the same table row
// lines up with the entity's embedding and activation map.
struct TextEntity {
  int entity_id = 0;
  std::string lemma;                              // non-empty, lowercase
  std::optional<std::pair<int, int>> caption_span;  // [start, end) token indices
  int embedding_ref = 0;
};

struct GraphEdge {
  int subject = 0;
  std::string predicate;
  int object = 0;

  bool operator==(const GraphEdge& o) const {
    return subject == o.subject && predicate == o.predicate && object == o.object;
  }
};

// The weak supervision: entities plus predicate edges, no boxes.
struct UnlocalizedSceneGraph {
  std::string image_id;
  std::vector<TextEntity> entities;
  std::vector<GraphEdge> edges;
};

struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
};

struct RegionProposal {
  Box box;
  std::string label;   // detector category
  double score = 0.0;  // detector confidence in [0,1]
  std::vector<double> feature;
};

struct ImageRecord {
  std::string image_id;
  double width = 0, height = 0;
  std::vector<RegionProposal> proposals;

  int num_proposals() const { return static_cast<int>(proposals.size()); }
};

enum class TargetSource { object_teacher, interaction_teacher, fused };

// Per-entity probability vector over an image's proposals. `defined` is
// false when the object teacher found no matching proposal; such entities
// drop out of the KD loss for that source.
struct TargetDistribution {
  std::vector<double> values;
  TargetSource source = TargetSource::fused;
  bool defined = false;
};

struct GroundedEntity {
  std::string lemma;
  std::vector<int> candidates;     // proposal indices, score desc / index asc
  std::vector<double> scores;      // similarity per candidate
};

// Localized triplets used as SGG training supervision.
struct PseudoSceneGraph {
  std::string image_id;
  std::vector<GroundedEntity> grounded_entities;
  std::vector<GraphEdge> edges;
};

struct Detection {
  Box box;
  std::string label;
  double score = 0.0;
};

struct PredictedTriplet {
  Box s_box;
  std::string s_label;
  std::string predicate;
  Box o_box;
  std::string o_label;
  double score = 0.0;  // product of subject, predicate and object scores
};

// Per-image SGDet output: labeled boxes plus confidence-ranked triplets.
// No ordered pair emits more than one predicate.
struct SceneGraphPrediction {
  std::string image_id;
  std::vector<Detection> detections;
  std::vector<PredictedTriplet> triplets;
};

struct GtTriplet {
  Box s_box;
  std::string s_label;
  std::string predicate;
  Box o_box;
  std::string o_label;
};

struct GtObject {
  Box box;
  std::string label;
};

struct ImageGroundTruth {
  std::string image_id;
  std::vector<GtTriplet> triplets;
  std::vector<GtObject> objects;
};

// Known entity→proposal alignments emitted by the synthetic generator,
// used only for scoring grounding accuracy.
struct AlignmentRecord {
  std::string image_id;
  std::vector<int> gold;  // true proposal index per entity
};

struct LabelSpaces {
  std::vector<std::string> objects;
  std::vector<std::string> predicates;
};

struct CaptionRecord {
  std::string image_id;
  std::string caption;
};

// Graph validation. Returns human-readable violations; empty iff well-formed.
std::vector<std::string> validate_graph(const UnlocalizedSceneGraph& graph);

// Validates proposal boxes, scores and feature widths against the record.
std::vector<std::string> validate_image(const ImageRecord& image, int expected_feature_dim);

}  // namespace wsgg
