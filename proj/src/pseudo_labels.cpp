#include "wsgg/pseudo_labels.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace wsgg {

PseudoSceneGraph generate_pseudo_gt(const GrounderParams& params, const ImageRecord& image,
                                    const UnlocalizedSceneGraph& graph, const Mat& embeddings,
                                    int k) {
  if (k < 1) throw std::invalid_argument("generate_pseudo_gt: K must be at least 1");
  if (image.proposals.empty()) {
    throw std::invalid_argument("generate_pseudo_gt: image '" + image.image_id + "' has no proposals");
  }
  Mat h = encode_text(embeddings, params);
  Mat v = encode_visual(proposal_features(image), params);
  Mat a = similarity_matrix(h, v, params);

  PseudoSceneGraph pseudo;
  pseudo.image_id = image.image_id;
  pseudo.edges = graph.edges;

  const int keep = std::min(k, a.cols);
  for (int i = 0; i < a.rows; ++i) {
    const double* row = a.row(i);
    std::vector<int> order(a.cols);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [row](int x, int y) {
      if (row[x] != row[y]) return row[x] > row[y];
      return x < y;
    });
    GroundedEntity e;
    e.lemma = graph.entities[i].lemma;
    for (int r = 0; r < keep; ++r) {
      e.candidates.push_back(order[r]);
      e.scores.push_back(row[order[r]]);
    }
    pseudo.grounded_entities.push_back(std::move(e));
  }
  return pseudo;
}

std::vector<PseudoSceneGraph> generate_pseudo_gt_all(const GrounderParams& params,
                                                     const std::vector<ImageRecord>& images,
                                                     const std::vector<UnlocalizedSceneGraph>& graphs,
                                                     const EntityEmbeddingTable& embeddings, int k,
                                                     int* skipped) {
  std::map<std::string, const ImageRecord*> by_id;
  for (const ImageRecord& im : images) by_id[im.image_id] = &im;

  std::vector<PseudoSceneGraph> out;
  int dropped = 0;
  for (const UnlocalizedSceneGraph& g : graphs) {
    auto it = by_id.find(g.image_id);
    if (it == by_id.end()) {
      throw std::runtime_error("no image record for graph '" + g.image_id + "'");
    }
    if (g.entities.empty() || it->second->proposals.empty()) {
      ++dropped;
      continue;
    }
    const Mat& rows = embeddings.require(g.image_id);
    if (rows.rows != static_cast<int>(g.entities.size())) {
      throw std::runtime_error("image '" + g.image_id + "': embedding rows != entity count");
    }
    out.push_back(generate_pseudo_gt(params, *it->second, g, rows, k));
  }
  if (skipped) *skipped = dropped;
  return out;
}

}  // namespace wsgg
