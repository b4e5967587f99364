#pragma once

#include <cstdint>
#include <vector>

#include "wsgg/fusion.hpp"
#include "wsgg/grounder.hpp"
#include "wsgg/teachers.hpp"
#include "wsgg/types.hpp"

namespace wsgg {

// Generator spec for the self-consistent benchmark world. Category/lemma
// prototypes are keyed by world_seed so train and test splits drawn with
// different instance seeds share the same feature geometry.
struct SynthSpec {
  int num_images = 20;
  int num_categories = 10;
  int proposals_per_image = 12;
  int entities_per_image = 3;
  // Cap on emitted edges; the default never truncates the distance rule
  // for three entities, which keeps relation existence an absolute
  // function of the pair.
  int edges_per_image = 6;
  int num_predicates = 4;  // spatial directions; smaller values fold them

  double feature_noise = 0.1;    // sigma on proposal features
  double embed_noise = 0.1;      // sigma on entity embeddings
  double label_flip_rate = 0.0;  // object-teacher corruption
  double map_offset_rate = 0.0;  // fraction of entities with misplaced maps
  double map_blur = 1.0;         // activation blob width multiplier
  double expert_noise = 0.05;

  int grid_size = 16;     // activation map resolution
  int feature_dim = 16;   // D_v
  int embed_dim = 16;     // D_e
  int expert_dim = 12;    // d_c
  double image_size = 256.0;

  std::uint64_t seed = 0;
  std::uint64_t world_seed = 99;
  std::string id_prefix = "synth";  // image ids: <prefix>_NNNN

  void validate() const;
};

// Every entity has a known true proposal: features sit on category
// prototypes, activation maps peak on the true box (unless offset), and
// detector labels flip at the configured rate.
struct SynthDataset {
  std::vector<ImageRecord> images;
  std::vector<UnlocalizedSceneGraph> graphs;
  EntityEmbeddingTable embeddings;
  std::vector<ActivationMap> activation_maps;
  ExpertCache expert;
  std::vector<AlignmentRecord> alignments;
  std::vector<ImageGroundTruth> gt;
  LabelSpaces labels;
};

SynthDataset synth_dataset(const SynthSpec& spec);

// The category/predicate vocabularies the generator draws from.
LabelSpaces synth_label_spaces(int num_categories, int num_predicates);

}  // namespace wsgg
