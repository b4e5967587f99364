#pragma once

#include <map>
#include <string>
#include <vector>

#include "wsgg/types.hpp"

namespace wsgg {

// Relevance grid between one text entity and image locations, produced
// upstream and ingested as data. grid is row-major, H x W, nonnegative.
// scale_x/scale_y convert grid cells to pixels (cell (r,c) covers
// [c*scale_x, (c+1)*scale_x) x [r*scale_y, (r+1)*scale_y)).
struct ActivationMap {
  std::string image_id;
  int entity_id = 0;
  int grid_h = 0;
  int grid_w = 0;
  double scale_x = 1.0;
  double scale_y = 1.0;
  std::vector<double> grid;

  double at(int r, int c) const { return grid[static_cast<std::size_t>(r) * grid_w + c]; }
};

std::vector<std::string> validate_activation_map(const ActivationMap& map);

// Case-folded exact matching after synonym canonicalization. The map is
// resolved to fixed points at construction so canonicalize is idempotent.
class SynonymMatcher {
 public:
  SynonymMatcher() = default;
  explicit SynonymMatcher(const std::map<std::string, std::string>& synonyms);

  std::string canonicalize(const std::string& word) const;
  bool matches(const std::string& entity_lemma, const std::string& detector_label) const;

 private:
  std::map<std::string, std::string> canonical_;
};

// Equal mass over proposals whose detector label matches the entity lemma;
// defined=false when nothing matches.
TargetDistribution object_aware_target(const TextEntity& entity, const ImageRecord& image,
                                       const SynonymMatcher& matcher);

// Sum of grid cells whose centers fall inside the box, divided by the square
// root of the box area measured in grid-cell units.
double activation_density(const ActivationMap& map, const Box& box);

// Softmax over per-proposal activation densities; always defined.
TargetDistribution interaction_aware_target(const TextEntity& entity, const ImageRecord& image,
                                            const ActivationMap& map, double temperature = 1.0);

// Keyed by (image_id, entity_id).
class ActivationMapTable {
 public:
  void add(ActivationMap map);
  const ActivationMap* find(const std::string& image_id, int entity_id) const;
  const ActivationMap& require(const std::string& image_id, int entity_id) const;
  std::size_t size() const { return maps_.size(); }

 private:
  std::map<std::pair<std::string, int>, ActivationMap> maps_;
};

}  // namespace wsgg
