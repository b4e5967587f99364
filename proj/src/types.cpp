#include "wsgg/types.hpp"

#include <cctype>
#include <set>
#include <tuple>

namespace wsgg {

namespace {

bool is_lower_nonempty(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (std::isupper(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

}  // namespace

std::vector<std::string> validate_graph(const UnlocalizedSceneGraph& graph) {
  std::vector<std::string> violations;
  const int n = static_cast<int>(graph.entities.size());

  for (int i = 0; i < n; ++i) {
    const TextEntity& e = graph.entities[i];
    if (!is_lower_nonempty(e.lemma)) {
      violations.push_back("entity " + std::to_string(i) + ": lemma must be non-empty lowercase");
    }
    if (e.caption_span && e.caption_span->first >= e.caption_span->second) {
      violations.push_back("entity " + std::to_string(i) + ": caption span start must precede end");
    }
  }

  std::set<std::tuple<int, std::string, int>> seen;
  for (std::size_t k = 0; k < graph.edges.size(); ++k) {
    const GraphEdge& e = graph.edges[k];
    const std::string tag = "edge " + std::to_string(k);
    if (e.subject < 0 || e.subject >= n || e.object < 0 || e.object >= n) {
      violations.push_back(tag + ": index out of range");
      continue;
    }
    if (e.subject == e.object) {
      violations.push_back(tag + ": self-loop");
    }
    if (e.predicate.empty()) {
      violations.push_back(tag + ": empty predicate");
    }
    auto key = std::make_tuple(e.subject, e.predicate, e.object);
    if (!seen.insert(key).second) {
      violations.push_back(tag + ": duplicate edge");
    }
  }
  return violations;
}

std::vector<std::string> validate_image(const ImageRecord& image, int expected_feature_dim) {
  std::vector<std::string> violations;
  for (std::size_t j = 0; j < image.proposals.size(); ++j) {
    const RegionProposal& p = image.proposals[j];
    const std::string tag = "proposal " + std::to_string(j);
    if (!(p.box.x1 < p.box.x2) || !(p.box.y1 < p.box.y2)) {
      violations.push_back(tag + ": degenerate box");
    }
    if (p.box.x1 < 0 || p.box.y1 < 0 || p.box.x2 > image.width || p.box.y2 > image.height) {
      violations.push_back(tag + ": box outside image bounds");
    }
    if (p.score < 0.0 || p.score > 1.0) {
      violations.push_back(tag + ": score outside [0,1]");
    }
    if (expected_feature_dim > 0 && static_cast<int>(p.feature.size()) != expected_feature_dim) {
      violations.push_back(tag + ": feature dim " + std::to_string(p.feature.size()) +
                           " != " + std::to_string(expected_feature_dim));
    }
  }
  return violations;
}

}  // namespace wsgg
