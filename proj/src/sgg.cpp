#include "wsgg/sgg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "wsgg/eval.hpp"
#include "wsgg/kernels.hpp"
#include "wsgg/optimizer.hpp"
#include "wsgg/rng.hpp"
#include "wsgg/textfmt.hpp"

namespace wsgg {

using nlohmann::json;

void SggConfig::validate() const {
  if (learning_rate <= 0.0) throw std::invalid_argument("SggConfig: learning rate must be positive");
  if (epochs < 0) throw std::invalid_argument("SggConfig: epochs must be nonnegative");
  if (hidden_dim < 1) throw std::invalid_argument("SggConfig: hidden_dim must be positive");
  if (background_ratio < 0) throw std::invalid_argument("SggConfig: background_ratio must be nonnegative");
  if (top_triplets < 1) throw std::invalid_argument("SggConfig: top_triplets must be positive");
}

namespace {

Mat uniform_fan_in(int rows, int cols, Rng& rng) {
  Mat m(rows, cols);
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  for (double& v : m.data) v = (2.0 * rng.next_double() - 1.0) * bound;
  return m;
}

// Cross entropy on one logit row; writes (softmax - onehot) * scale into
// grad_row when given.
double softmax_ce(const double* logits, int n, int target, double scale, double* grad_row) {
  double mx = logits[0];
  for (int j = 1; j < n; ++j) mx = std::max(mx, logits[j]);
  double sum = 0.0;
  for (int j = 0; j < n; ++j) sum += std::exp(logits[j] - mx);
  const double log_z = mx + std::log(sum);
  if (grad_row) {
    for (int j = 0; j < n; ++j) {
      double p = std::exp(logits[j] - log_z);
      grad_row[j] += scale * (p - (j == target ? 1.0 : 0.0));
    }
  }
  return log_z - logits[target];
}

}  // namespace

SggParams SggParams::init(const LabelSpaces& labels, int feature_dim, int hidden_dim,
                          std::uint64_t seed) {
  if (labels.objects.empty() || labels.predicates.empty()) {
    throw std::invalid_argument("SggParams::init: label spaces must be nonempty");
  }
  if (feature_dim < 1 || hidden_dim < 1) {
    throw std::invalid_argument("SggParams::init: dims must be positive");
  }
  Rng rng(substream_seed(seed, "sgg-init"));
  SggParams p;
  p.labels = labels;
  p.feature_dim = feature_dim;
  p.hidden_dim = hidden_dim;
  p.seed = seed;
  const int n_obj = p.num_objects();
  const int n_pred = p.num_predicates() + 1;  // + background
  const int pair_dim = 2 * feature_dim + kGeometryDim;
  p.object_head = {uniform_fan_in(feature_dim, n_obj, rng), std::vector<double>(n_obj, 0.0)};
  p.predicate_mlp.l1 = {uniform_fan_in(pair_dim, hidden_dim, rng),
                        std::vector<double>(hidden_dim, 0.0)};
  p.predicate_mlp.l2 = {uniform_fan_in(hidden_dim, n_pred, rng), std::vector<double>(n_pred, 0.0)};
  return p;
}

SggParams SggParams::zeros_like(const SggParams& other) {
  SggParams z = other;
  z.object_head.w.fill(0.0);
  std::fill(z.object_head.b.begin(), z.object_head.b.end(), 0.0);
  z.predicate_mlp.l1.w.fill(0.0);
  std::fill(z.predicate_mlp.l1.b.begin(), z.predicate_mlp.l1.b.end(), 0.0);
  z.predicate_mlp.l2.w.fill(0.0);
  std::fill(z.predicate_mlp.l2.b.begin(), z.predicate_mlp.l2.b.end(), 0.0);
  return z;
}

std::vector<ParamView> param_views(SggParams& p) {
  std::vector<ParamView> views;
  views.push_back({"object.w", p.object_head.w.data.data(), p.object_head.w.data.size()});
  views.push_back({"object.b", p.object_head.b.data(), p.object_head.b.size()});
  views.push_back({"pred.w1", p.predicate_mlp.l1.w.data.data(), p.predicate_mlp.l1.w.data.size()});
  views.push_back({"pred.b1", p.predicate_mlp.l1.b.data(), p.predicate_mlp.l1.b.size()});
  views.push_back({"pred.w2", p.predicate_mlp.l2.w.data.data(), p.predicate_mlp.l2.w.data.size()});
  views.push_back({"pred.b2", p.predicate_mlp.l2.b.data(), p.predicate_mlp.l2.b.size()});
  return views;
}

std::vector<double> pair_geometry(const Box& subject, const Box& object, double image_w,
                                  double image_h) {
  const double scx = 0.5 * (subject.x1 + subject.x2);
  const double scy = 0.5 * (subject.y1 + subject.y2);
  const double ocx = 0.5 * (object.x1 + object.x2);
  const double ocy = 0.5 * (object.y1 + object.y2);
  return {(ocx - scx) / image_w, (ocy - scy) / image_h,
          std::log(object.width() / subject.width()),
          std::log(object.height() / subject.height()), iou(subject, object)};
}

namespace {

struct ObjectSample {
  int proposal;
  int cls;
};

struct PairSample {
  int subject;
  int object;
  int cls;  // background_index() for negatives
};

// One image's worth of supervision for one step.
struct StepSamples {
  std::vector<ObjectSample> objects;
  std::vector<PairSample> pairs;
};

int label_index(const std::vector<std::string>& space, const std::string& label) {
  auto it = std::find(space.begin(), space.end(), label);
  return it == space.end() ? -1 : static_cast<int>(it - space.begin());
}

}  // namespace

StepDraw draw_step_boxes(const PseudoSceneGraph& graph, Rng& rng) {
  StepDraw draw;
  draw.entity_boxes.resize(graph.grounded_entities.size());
  for (std::size_t i = 0; i < graph.grounded_entities.size(); ++i) {
    const GroundedEntity& ge = graph.grounded_entities[i];
    draw.entity_boxes[i] = ge.candidates[rng.next_int(static_cast<int>(ge.candidates.size()))];
  }
  for (const GraphEdge& edge : graph.edges) {
    const int s_prop = draw.entity_boxes[edge.subject];
    int o_prop = draw.entity_boxes[edge.object];
    if (o_prop == s_prop) {
      std::vector<int> alternatives;
      for (int c : graph.grounded_entities[edge.object].candidates) {
        if (c != s_prop) alternatives.push_back(c);
      }
      if (alternatives.empty()) {
        draw.edge_boxes.push_back({-1, -1});
        continue;
      }
      o_prop = alternatives[rng.next_int(static_cast<int>(alternatives.size()))];
    }
    draw.edge_boxes.push_back({s_prop, o_prop});
  }
  return draw;
}

SggTrainResult sgg_train(const std::vector<PseudoSceneGraph>& pseudo,
                         const std::vector<ImageRecord>& images, const LabelSpaces& labels,
                         const SggConfig& config) {
  config.validate();
  if (pseudo.empty()) throw std::invalid_argument("sgg_train: empty pseudo ground truth");

  std::map<std::string, const ImageRecord*> by_id;
  for (const ImageRecord& im : images) by_id[im.image_id] = &im;
  for (const PseudoSceneGraph& g : pseudo) {
    if (by_id.find(g.image_id) == by_id.end()) {
      throw std::runtime_error("no image record for pseudo graph '" + g.image_id + "'");
    }
  }

  int feature_dim = 0;
  for (const PseudoSceneGraph& g : pseudo) {
    const ImageRecord* im = by_id[g.image_id];
    if (!im->proposals.empty()) {
      feature_dim = static_cast<int>(im->proposals[0].feature.size());
      break;
    }
  }
  if (feature_dim == 0) throw std::runtime_error("sgg_train: no proposals in training images");

  SggTrainResult result{SggParams::init(labels, feature_dim, config.hidden_dim, config.seed),
                        {}, 0, 0};
  SggParams& params = result.params;
  const int n_obj = params.num_objects();
  const int n_pred_cls = params.num_predicates() + 1;
  const int bg = params.background_index();

  // Precompute label indices; unknown labels drop out once, with a count.
  struct PreparedGraph {
    const PseudoSceneGraph* graph;
    const ImageRecord* image;
    std::vector<int> entity_cls;  // -1 when lemma unknown
    std::vector<int> edge_cls;    // -1 when predicate unknown
  };
  std::vector<PreparedGraph> prepared;
  for (const PseudoSceneGraph& g : pseudo) {
    PreparedGraph pg{&g, by_id[g.image_id], {}, {}};
    for (const GroundedEntity& e : g.grounded_entities) {
      const int cls = label_index(labels.objects, e.lemma);
      if (cls < 0) ++result.skipped_entities;
      pg.entity_cls.push_back(cls);
    }
    for (const GraphEdge& e : g.edges) {
      const int cls = label_index(labels.predicates, e.predicate);
      if (cls < 0) ++result.skipped_edges;
      pg.edge_cls.push_back(cls);
    }
    prepared.push_back(std::move(pg));
  }

  AdamOptimizer opt(config.learning_rate);
  Rng shuffle_rng(substream_seed(config.seed, "sgg-trainer"));
  Rng sample_rng(substream_seed(config.seed, "sgg-sampler"));

  std::vector<int> order(prepared.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    SggEpochLog log{epoch, 0.0, 0.0, 0.0};
    int counted = 0;

    for (int gi : order) {
      const PreparedGraph& pg = prepared[gi];
      const ImageRecord& image = *pg.image;
      const int nv = image.num_proposals();
      if (nv < 1) continue;

      // Draw one candidate per entity; collisions on an edge re-draw the
      // object among its non-colliding candidates, else the edge skips
      // this step.
      const StepDraw draw = draw_step_boxes(*pg.graph, sample_rng);
      StepSamples samples;
      for (std::size_t i = 0; i < pg.graph->grounded_entities.size(); ++i) {
        if (pg.entity_cls[i] >= 0) samples.objects.push_back({draw.entity_boxes[i], pg.entity_cls[i]});
      }
      for (std::size_t k = 0; k < pg.graph->edges.size(); ++k) {
        if (pg.edge_cls[k] < 0) continue;
        const auto [s_prop, o_prop] = draw.edge_boxes[k];
        if (s_prop < 0) continue;  // unresolvable collision this step
        samples.pairs.push_back({s_prop, o_prop, pg.edge_cls[k]});
      }

      // Background pairs at the configured negative:positive ratio.
      if (!samples.pairs.empty() && nv >= 2 && config.background_ratio > 0) {
        std::set<std::pair<int, int>> positive;
        for (const PairSample& ps : samples.pairs) positive.insert({ps.subject, ps.object});
        std::vector<std::pair<int, int>> pool;
        for (int u = 0; u < nv; ++u) {
          for (int w = 0; w < nv; ++w) {
            if (u != w && !positive.count({u, w})) pool.push_back({u, w});
          }
        }
        sample_rng.shuffle(pool);
        const std::size_t want =
            std::min(pool.size(), samples.pairs.size() * static_cast<std::size_t>(config.background_ratio));
        for (std::size_t i = 0; i < want; ++i) {
          samples.pairs.push_back({pool[i].first, pool[i].second, bg});
        }
      }
      if (samples.objects.empty() && samples.pairs.empty()) continue;

      const Mat feats = proposal_features(image);
      SggParams grads = SggParams::zeros_like(params);
      double obj_loss = 0.0;
      double rel_loss = 0.0;

      if (!samples.objects.empty()) {
        Mat logits;
        kernels::matmul_nn(feats, params.object_head.w, logits);
        kernels::add_row_bias(logits, params.object_head.b);
        Mat dlogits(logits.rows, logits.cols);
        const double scale = 1.0 / samples.objects.size();
        for (const ObjectSample& os : samples.objects) {
          obj_loss += scale * softmax_ce(logits.row(os.proposal), n_obj, os.cls, scale,
                                         dlogits.row(os.proposal));
        }
        Mat dw;
        kernels::matmul_tn(feats, dlogits, dw);
        for (std::size_t i = 0; i < dw.size(); ++i) grads.object_head.w.data[i] += dw.data[i];
        std::vector<double> db(n_obj);
        kernels::col_sums(dlogits, db);
        for (int j = 0; j < n_obj; ++j) grads.object_head.b[j] += db[j];
      }

      if (!samples.pairs.empty()) {
        const int pair_dim = 2 * feature_dim + kGeometryDim;
        Mat input(static_cast<int>(samples.pairs.size()), pair_dim);
        for (std::size_t r = 0; r < samples.pairs.size(); ++r) {
          const PairSample& ps = samples.pairs[r];
          double* row = input.row(static_cast<int>(r));
          const double* fs = feats.row(ps.subject);
          const double* fo = feats.row(ps.object);
          std::copy(fs, fs + feature_dim, row);
          std::copy(fo, fo + feature_dim, row + feature_dim);
          const std::vector<double> geom = pair_geometry(
              image.proposals[ps.subject].box, image.proposals[ps.object].box, image.width,
              image.height);
          std::copy(geom.begin(), geom.end(), row + 2 * feature_dim);
        }
        MlpCache cache;
        Mat logits = mlp2_forward(input, params.predicate_mlp, &cache);
        Mat dlogits(logits.rows, logits.cols);
        const double scale = 1.0 / samples.pairs.size();
        for (std::size_t r = 0; r < samples.pairs.size(); ++r) {
          rel_loss += scale * softmax_ce(logits.row(static_cast<int>(r)), n_pred_cls,
                                         samples.pairs[r].cls, scale,
                                         dlogits.row(static_cast<int>(r)));
        }
        mlp2_backward(input, params.predicate_mlp, cache, dlogits, grads.predicate_mlp);
      }

      const double total = obj_loss + rel_loss;
      if (!std::isfinite(total)) {
        throw std::runtime_error("sgg_train: non-finite loss at epoch " + std::to_string(epoch) +
                                 ", image '" + image.image_id + "'");
      }
      opt.step(param_views(params), param_views(grads));
      log.object_loss += obj_loss;
      log.predicate_loss += rel_loss;
      log.total += total;
      ++counted;
    }
    if (counted > 0) {
      log.object_loss /= counted;
      log.predicate_loss /= counted;
      log.total /= counted;
    }
    result.log.push_back(log);
  }
  return result;
}

SceneGraphPrediction sgg_predict(const ImageRecord& image, const SggParams& params,
                                 int top_triplets) {
  if (image.proposals.empty()) throw std::invalid_argument("sgg_predict: image has no proposals");
  const int nv = image.num_proposals();
  const int n_obj = params.num_objects();
  const int n_pred = params.num_predicates();

  const Mat feats = proposal_features(image);
  Mat obj_logits;
  kernels::matmul_nn(feats, params.object_head.w, obj_logits);
  kernels::add_row_bias(obj_logits, params.object_head.b);
  Mat obj_probs;
  kernels::softmax_rows(obj_logits, obj_probs);

  SceneGraphPrediction pred;
  pred.image_id = image.image_id;
  std::vector<int> obj_cls(nv);
  std::vector<double> obj_score(nv);
  for (int j = 0; j < nv; ++j) {
    int best = 0;
    for (int c = 1; c < n_obj; ++c) {
      if (obj_probs(j, c) > obj_probs(j, best)) best = c;
    }
    obj_cls[j] = best;
    obj_score[j] = obj_probs(j, best);
    pred.detections.push_back({image.proposals[j].box, params.labels.objects[best], obj_score[j]});
  }

  if (nv < 2) return pred;  // no pairs, empty triplet list

  Mat input(nv * (nv - 1), 2 * params.feature_dim + kGeometryDim);
  std::vector<std::pair<int, int>> pair_of_row;
  pair_of_row.reserve(static_cast<std::size_t>(nv) * (nv - 1));
  int r = 0;
  for (int s = 0; s < nv; ++s) {
    for (int o = 0; o < nv; ++o) {
      if (s == o) continue;
      double* row = input.row(r);
      const double* fs = feats.row(s);
      const double* fo = feats.row(o);
      std::copy(fs, fs + params.feature_dim, row);
      std::copy(fo, fo + params.feature_dim, row + params.feature_dim);
      const std::vector<double> geom = pair_geometry(image.proposals[s].box,
                                                     image.proposals[o].box, image.width,
                                                     image.height);
      std::copy(geom.begin(), geom.end(), row + 2 * params.feature_dim);
      pair_of_row.push_back({s, o});
      ++r;
    }
  }
  Mat pred_logits = mlp2_forward(input, params.predicate_mlp);
  Mat pred_probs;
  kernels::softmax_rows(pred_logits, pred_probs);

  struct Ranked {
    double score;
    int s, o, p;
  };
  std::vector<Ranked> ranked;
  ranked.reserve(pair_of_row.size());
  for (std::size_t row = 0; row < pair_of_row.size(); ++row) {
    // Best non-background predicate; its softmax mass is the predicate score.
    int best = 0;
    for (int c = 1; c < n_pred; ++c) {
      if (pred_probs(static_cast<int>(row), c) > pred_probs(static_cast<int>(row), best)) best = c;
    }
    const auto [s, o] = pair_of_row[row];
    ranked.push_back({pred_probs(static_cast<int>(row), best) * obj_score[s] * obj_score[o], s, o,
                      best});
  }
  std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.s != b.s) return a.s < b.s;
    if (a.o != b.o) return a.o < b.o;
    return a.p < b.p;
  });
  const std::size_t keep = std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(top_triplets));
  for (std::size_t i = 0; i < keep; ++i) {
    const Ranked& t = ranked[i];
    pred.triplets.push_back({image.proposals[t.s].box, params.labels.objects[obj_cls[t.s]],
                             params.labels.predicates[t.p], image.proposals[t.o].box,
                             params.labels.objects[obj_cls[t.o]], t.score});
  }
  return pred;
}

void write_sgg_checkpoint(const std::string& path, const SggParams& params) {
  auto& p = const_cast<SggParams&>(params);
  json arrays = json::object();
  for (ParamView& v : param_views(p)) {
    arrays[v.name] = {{"data", std::vector<double>(v.data, v.data + v.n)}};
  }
  json j{{"format", "wsgg-sgg"},
         {"version", 1},
         {"seed", params.seed},
         {"feature_dim", params.feature_dim},
         {"hidden_dim", params.hidden_dim},
         {"labels", {{"objects", params.labels.objects}, {"predicates", params.labels.predicates}}},
         {"params", std::move(arrays)}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << j.dump() << "\n";
}

SggParams read_sgg_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error(path + ": malformed checkpoint: " + e.what());
  }
  if (j.value("format", "") != "wsgg-sgg") {
    throw std::runtime_error(path + ": not an SGG checkpoint");
  }
  LabelSpaces labels{j["labels"]["objects"].get<std::vector<std::string>>(),
                     j["labels"]["predicates"].get<std::vector<std::string>>()};
  SggParams p = SggParams::init(labels, j["feature_dim"].get<int>(), j["hidden_dim"].get<int>(),
                                j["seed"].get<std::uint64_t>());
  const json& arrays = j.at("params");
  for (ParamView& v : param_views(p)) {
    const auto data = arrays.at(v.name).at("data").get<std::vector<double>>();
    if (data.size() != v.n) {
      throw std::runtime_error(path + ": checkpoint array '" + v.name + "' has wrong size");
    }
    std::copy(data.begin(), data.end(), v.data);
  }
  return p;
}

std::string sgg_log_csv(const std::vector<SggEpochLog>& log) {
  std::string csv = "epoch,L_obj,L_rel,L_SGG\n";
  for (const SggEpochLog& row : log) {
    csv += std::to_string(row.epoch) + "," + format_double(row.object_loss) + "," +
           format_double(row.predicate_loss) + "," + format_double(row.total) + "\n";
  }
  return csv;
}

}  // namespace wsgg
