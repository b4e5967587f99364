#pragma once

#include <vector>

#include "wsgg/grounder.hpp"
#include "wsgg/training.hpp"
#include "wsgg/types.hpp"

namespace wsgg {

// Top-K proposals per entity by similarity (score desc, index asc on ties);
// K truncates to the proposal count. Edges are copied from the graph.
PseudoSceneGraph generate_pseudo_gt(const GrounderParams& params, const ImageRecord& image,
                                    const UnlocalizedSceneGraph& graph, const Mat& embeddings,
                                    int k);

// Joins images/graphs/embeddings by image_id; images with zero proposals or
// graphs with zero entities are skipped and counted.
std::vector<PseudoSceneGraph> generate_pseudo_gt_all(const GrounderParams& params,
                                                     const std::vector<ImageRecord>& images,
                                                     const std::vector<UnlocalizedSceneGraph>& graphs,
                                                     const EntityEmbeddingTable& embeddings, int k,
                                                     int* skipped = nullptr);

}  // namespace wsgg
