#include "wsgg/teachers.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

namespace wsgg {

namespace {

std::string fold_case(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

std::vector<std::string> validate_activation_map(const ActivationMap& map) {
  std::vector<std::string> violations;
  if (map.grid_h < 1 || map.grid_w < 1) violations.push_back("grid must be at least 1x1");
  if (map.scale_x <= 0.0 || map.scale_y <= 0.0) violations.push_back("scale factors must be positive");
  if (map.grid.size() != static_cast<std::size_t>(map.grid_h) * map.grid_w) {
    violations.push_back("grid size does not match H*W");
  }
  for (double v : map.grid) {
    if (!(v >= 0.0)) {
      violations.push_back("grid cells must be nonnegative");
      break;
    }
  }
  return violations;
}

SynonymMatcher::SynonymMatcher(const std::map<std::string, std::string>& synonyms) {
  // Resolve chains (a->b, b->c) so a maps straight to c; reject cycles.
  for (const auto& [word, target] : synonyms) {
    std::string cur = fold_case(target);
    int hops = 0;
    for (auto it = synonyms.find(cur); it != synonyms.end(); it = synonyms.find(cur)) {
      cur = fold_case(it->second);
      if (++hops > static_cast<int>(synonyms.size())) {
        throw std::invalid_argument("synonym map contains a cycle through '" + word + "'");
      }
    }
    canonical_[fold_case(word)] = cur;
  }
}

std::string SynonymMatcher::canonicalize(const std::string& word) const {
  std::string folded = fold_case(word);
  auto it = canonical_.find(folded);
  return it == canonical_.end() ? folded : it->second;
}

bool SynonymMatcher::matches(const std::string& entity_lemma, const std::string& detector_label) const {
  return canonicalize(entity_lemma) == canonicalize(detector_label);
}

TargetDistribution object_aware_target(const TextEntity& entity, const ImageRecord& image,
                                       const SynonymMatcher& matcher) {
  const int n = image.num_proposals();
  if (n < 1) throw std::invalid_argument("object_aware_target: image has no proposals");

  TargetDistribution target;
  target.source = TargetSource::object_teacher;
  target.values.assign(n, 0.0);

  int matches = 0;
  for (int j = 0; j < n; ++j) {
    if (matcher.matches(entity.lemma, image.proposals[j].label)) {
      target.values[j] = 1.0;
      ++matches;
    }
  }
  if (matches == 0) {
    target.defined = false;
    return target;
  }
  for (double& v : target.values) v /= matches;
  target.defined = true;
  return target;
}

double activation_density(const ActivationMap& map, const Box& box) {
  if (box.area() <= 0.0) throw std::invalid_argument("activation_density: zero-area box");
  auto violations = validate_activation_map(map);
  if (!violations.empty()) {
    throw std::invalid_argument("activation_density: invalid map: " + violations.front());
  }

  // Box corners in grid units; cell centers sit at half-integers.
  const double gx1 = box.x1 / map.scale_x;
  const double gx2 = box.x2 / map.scale_x;
  const double gy1 = box.y1 / map.scale_y;
  const double gy2 = box.y2 / map.scale_y;

  double sum = 0.0;
  for (int r = 0; r < map.grid_h; ++r) {
    const double cy = r + 0.5;
    if (cy < gy1 || cy >= gy2) continue;
    for (int c = 0; c < map.grid_w; ++c) {
      const double cx = c + 0.5;
      if (cx >= gx1 && cx < gx2) sum += map.at(r, c);
    }
  }
  const double grid_area = (gx2 - gx1) * (gy2 - gy1);
  return sum / std::sqrt(grid_area);
}

TargetDistribution interaction_aware_target(const TextEntity& entity, const ImageRecord& image,
                                            const ActivationMap& map, double temperature) {
  (void)entity;
  const int n = image.num_proposals();
  if (n < 1) throw std::invalid_argument("interaction_aware_target: image has no proposals");
  if (temperature <= 0.0) throw std::invalid_argument("interaction_aware_target: temperature must be positive");

  std::vector<double> densities(n);
  for (int j = 0; j < n; ++j) {
    densities[j] = activation_density(map, image.proposals[j].box) / temperature;
  }

  // Softmax, shifted by the max for stability.
  const double mx = *std::max_element(densities.begin(), densities.end());
  TargetDistribution target;
  target.source = TargetSource::interaction_teacher;
  target.values.resize(n);
  double sum = 0.0;
  for (int j = 0; j < n; ++j) {
    target.values[j] = std::exp(densities[j] - mx);
    sum += target.values[j];
  }
  for (double& v : target.values) v /= sum;
  target.defined = true;
  return target;
}

void ActivationMapTable::add(ActivationMap map) {
  auto key = std::make_pair(map.image_id, map.entity_id);
  maps_[key] = std::move(map);
}

const ActivationMap* ActivationMapTable::find(const std::string& image_id, int entity_id) const {
  auto it = maps_.find(std::make_pair(image_id, entity_id));
  return it == maps_.end() ? nullptr : &it->second;
}

const ActivationMap& ActivationMapTable::require(const std::string& image_id, int entity_id) const {
  const ActivationMap* m = find(image_id, entity_id);
  if (!m) {
    throw std::runtime_error("missing activation map for image '" + image_id + "' entity " +
                             std::to_string(entity_id));
  }
  return *m;
}

}  // namespace wsgg
