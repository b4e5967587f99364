#include "wsgg/eval.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

namespace wsgg {

double iou(const Box& a, const Box& b) {
  if (a.area() <= 0.0 || b.area() <= 0.0) throw std::invalid_argument("iou: zero-area box");
  const double ix1 = std::max(a.x1, b.x1);
  const double iy1 = std::max(a.y1, b.y1);
  const double ix2 = std::min(a.x2, b.x2);
  const double iy2 = std::min(a.y2, b.y2);
  const double iw = ix2 - ix1;
  const double ih = iy2 - iy1;
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

namespace {

bool triplet_matches(const PredictedTriplet& p, const GtTriplet& g, double thr) {
  return p.s_label == g.s_label && p.predicate == g.predicate && p.o_label == g.o_label &&
         iou(p.s_box, g.s_box) >= thr && iou(p.o_box, g.o_box) >= thr;
}

}  // namespace

double recall_at_k(const SceneGraphPrediction& prediction, const std::vector<GtTriplet>& gt,
                   int k, double iou_threshold) {
  if (gt.empty()) throw std::invalid_argument("recall_at_k: empty ground truth");
  if (k < 1) throw std::invalid_argument("recall_at_k: K must be at least 1");

  // Confidence order; stable so file order breaks exact ties.
  std::vector<int> order(prediction.triplets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
    return prediction.triplets[x].score > prediction.triplets[y].score;
  });
  if (static_cast<int>(order.size()) > k) order.resize(k);

  std::vector<bool> matched(gt.size(), false);
  int hits = 0;
  for (int idx : order) {
    const PredictedTriplet& p = prediction.triplets[idx];
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (matched[g]) continue;
      if (triplet_matches(p, gt[g], iou_threshold)) {
        matched[g] = true;
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(gt.size());
}

double mean_recall_at_k(const std::vector<SceneGraphPrediction>& predictions,
                        const std::vector<ImageGroundTruth>& gt, int k, double iou_threshold) {
  std::map<std::string, const SceneGraphPrediction*> by_id;
  for (const SceneGraphPrediction& p : predictions) by_id[p.image_id] = &p;

  static const SceneGraphPrediction kEmpty{};
  double total = 0.0;
  int counted = 0;
  for (const ImageGroundTruth& g : gt) {
    if (g.triplets.empty()) continue;
    auto it = by_id.find(g.image_id);
    const SceneGraphPrediction* p = it == by_id.end() ? &kEmpty : it->second;
    total += recall_at_k(*p, g.triplets, k, iou_threshold);
    ++counted;
  }
  if (counted == 0) throw std::invalid_argument("mean_recall_at_k: no images carry ground truth");
  return total / counted;
}

double detection_map(const std::vector<SceneGraphPrediction>& predictions,
                     const std::vector<ImageGroundTruth>& gt, double iou_threshold) {
  std::set<std::string> classes;
  long total_gt = 0;
  for (const ImageGroundTruth& g : gt) {
    for (const GtObject& o : g.objects) {
      classes.insert(o.label);
      ++total_gt;
    }
  }
  if (total_gt == 0) throw std::invalid_argument("detection_map: no ground truth objects");

  std::map<std::string, const SceneGraphPrediction*> preds_by_id;
  for (const SceneGraphPrediction& p : predictions) preds_by_id[p.image_id] = &p;

  double ap_sum = 0.0;
  for (const std::string& cls : classes) {
    // Class detections across images, ranked by confidence; ties keep
    // (image, detection) order so the ranking is total.
    struct Det {
      double score;
      int image;
      int index;
      const Box* box;
    };
    std::vector<Det> dets;
    int n_gt = 0;
    std::vector<std::vector<const Box*>> gt_boxes(gt.size());
    for (std::size_t gi = 0; gi < gt.size(); ++gi) {
      for (const GtObject& o : gt[gi].objects) {
        if (o.label == cls) {
          gt_boxes[gi].push_back(&o.box);
          ++n_gt;
        }
      }
      auto it = preds_by_id.find(gt[gi].image_id);
      if (it == preds_by_id.end()) continue;
      const auto& dlist = it->second->detections;
      for (std::size_t di = 0; di < dlist.size(); ++di) {
        if (dlist[di].label == cls) {
          dets.push_back({dlist[di].score, static_cast<int>(gi), static_cast<int>(di), &dlist[di].box});
        }
      }
    }
    std::sort(dets.begin(), dets.end(), [](const Det& a, const Det& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.image != b.image) return a.image < b.image;
      return a.index < b.index;
    });

    std::vector<std::vector<bool>> used(gt.size());
    for (std::size_t gi = 0; gi < gt.size(); ++gi) used[gi].assign(gt_boxes[gi].size(), false);

    const int n = static_cast<int>(dets.size());
    std::vector<double> prec(n), rec(n);
    int tp = 0, fp = 0;
    for (int i = 0; i < n; ++i) {
      const Det& d = dets[i];
      int best = -1;
      double best_iou = 0.0;
      for (std::size_t g = 0; g < gt_boxes[d.image].size(); ++g) {
        if (used[d.image][g]) continue;
        const double v = iou(*d.box, *gt_boxes[d.image][g]);
        if (v >= iou_threshold && v > best_iou) {
          best_iou = v;
          best = static_cast<int>(g);
        }
      }
      if (best >= 0) {
        used[d.image][best] = true;
        ++tp;
      } else {
        ++fp;
      }
      prec[i] = static_cast<double>(tp) / (tp + fp);
      rec[i] = static_cast<double>(tp) / n_gt;
    }

    // Precision envelope, then the area under it at each recall step.
    for (int i = n - 2; i >= 0; --i) prec[i] = std::max(prec[i], prec[i + 1]);
    double ap = 0.0;
    double prev_rec = 0.0;
    for (int i = 0; i < n; ++i) {
      if (rec[i] > prev_rec) {
        ap += (rec[i] - prev_rec) * prec[i];
        prev_rec = rec[i];
      }
    }
    ap_sum += ap;
  }
  return ap_sum / static_cast<double>(classes.size());
}

}  // namespace wsgg
