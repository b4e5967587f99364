#pragma once

#include <vector>

#include "wsgg/types.hpp"

namespace wsgg {

// Intersection over union of corner-format boxes; zero-area boxes are errors.
double iou(const Box& a, const Box& b);

// SGDet recall for one image. A GT triplet is matched by a prediction iff
// all three labels agree and both boxes overlap the GT boxes with IoU >= the
// threshold. Matching is one-to-one and greedy: predictions in confidence
// order, each taking the first unmatched GT in file order.
double recall_at_k(const SceneGraphPrediction& prediction, const std::vector<GtTriplet>& gt,
                   int k, double iou_threshold = 0.5);

// Mean of per-image recall over images with nonempty GT.
double mean_recall_at_k(const std::vector<SceneGraphPrediction>& predictions,
                        const std::vector<ImageGroundTruth>& gt, int k,
                        double iou_threshold = 0.5);

// Per-class average precision at the IoU threshold with all-point
// interpolation; detections match greedily in confidence order, each taking
// the unmatched same-class GT with the highest IoU. The mean runs over
// classes present in GT; detections of absent classes are ignored.
double detection_map(const std::vector<SceneGraphPrediction>& predictions,
                     const std::vector<ImageGroundTruth>& gt, double iou_threshold = 0.5);

}  // namespace wsgg
