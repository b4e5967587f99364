#include "wsgg/training.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "wsgg/kernels.hpp"
#include "wsgg/optimizer.hpp"
#include "wsgg/textfmt.hpp"

namespace wsgg {

int TrainConfig::lambda() const {
  if (lambda_adaptor == -1) return fusion == FusionStrategy::self ? 1 : 0;
  return lambda_adaptor;
}

void TrainConfig::validate() const {
  if (margin_alpha1 <= 0.0 || margin_alpha2 <= 0.0) {
    throw std::invalid_argument("TrainConfig: margins must be positive");
  }
  if (learning_rate <= 0.0) throw std::invalid_argument("TrainConfig: learning rate must be positive");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch size must be at least 1");
  if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be nonnegative");
  if (top_k < 1) throw std::invalid_argument("TrainConfig: top_k must be at least 1");
  if (hidden_dim < 1 || embed_dim < 1) throw std::invalid_argument("TrainConfig: dims must be positive");
  if (interaction_temperature <= 0.0) {
    throw std::invalid_argument("TrainConfig: interaction temperature must be positive");
  }
  if (lambda_adaptor != -1) {
    const int expected = fusion == FusionStrategy::self ? 1 : 0;
    if (lambda_adaptor != expected) {
      throw std::invalid_argument("TrainConfig: lambda must be 1 iff the fusion strategy is self-guided");
    }
  }
  if (fusion != FusionStrategy::average && !teachers.both()) {
    throw std::invalid_argument("TrainConfig: reweight strategies need both teachers enabled");
  }
}

namespace {

Mat features_of(const ImageRecord& image) { return proposal_features(image); }

}  // namespace

TrainingSet TrainingSet::build(const std::vector<ImageRecord>& images,
                               const std::vector<UnlocalizedSceneGraph>& graphs,
                               const EntityEmbeddingTable& embeddings, const TrainConfig& config,
                               const ActivationMapTable* activations, const ExpertCache* expert) {
  std::map<std::string, const ImageRecord*> by_id;
  for (const ImageRecord& im : images) by_id[im.image_id] = &im;

  TrainingSet set;
  for (const UnlocalizedSceneGraph& g : graphs) {
    auto it = by_id.find(g.image_id);
    if (it == by_id.end()) {
      throw std::runtime_error("no image record for graph '" + g.image_id + "'");
    }
    const ImageRecord* image = it->second;
    if (g.entities.empty() || image->proposals.empty()) {
      ++set.skipped;
      continue;
    }
    const Mat& rows = embeddings.require(g.image_id);
    if (rows.rows != static_cast<int>(g.entities.size())) {
      throw std::runtime_error("image '" + g.image_id + "': " + std::to_string(rows.rows) +
                               " embedding rows for " + std::to_string(g.entities.size()) +
                               " entities");
    }
    if (config.teachers.interaction && activations) {
      for (const TextEntity& e : g.entities) activations->require(g.image_id, e.entity_id);
    }
    if (config.fusion == FusionStrategy::expert && expert) {
      auto cit = expert->find(g.image_id);
      if (cit == expert->end()) {
        throw std::runtime_error("no expert embeddings for image '" + g.image_id + "'");
      }
      if (cit->second.entity_prompt_embeddings.rows != static_cast<int>(g.entities.size()) ||
          cit->second.proposal_embeddings.rows != image->num_proposals()) {
        throw std::runtime_error("expert embeddings for image '" + g.image_id +
                                 "' do not match entity/proposal counts");
      }
    }
    set.pairs.push_back({image, &g, &rows});
  }
  return set;
}

TeacherTable build_teacher_table(const TrainingSet& set, const SynonymMatcher& matcher,
                                 const ActivationMapTable* activations, const ExpertCache* expert,
                                 const TrainConfig& config) {
  TeacherTable table;
  table.per_pair.resize(set.pairs.size());
  for (std::size_t p = 0; p < set.pairs.size(); ++p) {
    const TrainingPair& pair = set.pairs[p];
    TeacherTable::PairTargets& tt = table.per_pair[p];
    const int ne = pair.num_entities();
    if (config.teachers.object) {
      tt.object.reserve(ne);
      for (const TextEntity& e : pair.graph->entities) {
        tt.object.push_back(object_aware_target(e, *pair.image, matcher));
      }
    }
    if (config.teachers.interaction) {
      if (!activations) throw std::runtime_error("interaction teacher enabled but no activation maps");
      tt.interaction.reserve(ne);
      for (const TextEntity& e : pair.graph->entities) {
        const ActivationMap& map = activations->require(pair.image->image_id, e.entity_id);
        tt.interaction.push_back(
            interaction_aware_target(e, *pair.image, map, config.interaction_temperature));
      }
    }
    if (config.fusion == FusionStrategy::expert && config.teachers.both()) {
      if (!expert) throw std::runtime_error("expert strategy enabled but no expert cache");
      const ExpertEmbeddings& emb = expert->at(pair.image->image_id);
      tt.expert_weights.reserve(ne);
      for (int i = 0; i < ne; ++i) {
        std::span<const double> prompt(emb.entity_prompt_embeddings.row(i),
                                       static_cast<std::size_t>(emb.entity_prompt_embeddings.cols));
        tt.expert_weights.push_back(
            expert_reweight(tt.object[i], tt.interaction[i], emb.proposal_embeddings, prompt));
      }
    }
  }
  return table;
}

StepContext prepare_step_context(const TrainingSet& set, const std::vector<int>& batch,
                                 const TeacherTable& teachers, const GrounderParams& params,
                                 const AdaptorParams& adaptor, const TrainConfig& config,
                                 Rng& negative_rng) {
  StepContext ctx;
  ctx.per_pair.resize(batch.size());
  const bool self_guided = config.fusion == FusionStrategy::self && config.teachers.both();

  for (std::size_t b = 0; b < batch.size(); ++b) {
    const TrainingPair& pair = set.pairs[batch[b]];
    const TeacherTable::PairTargets& tt = teachers.per_pair[batch[b]];
    StepContext::PairContext& pc = ctx.per_pair[b];
    const int ne = pair.num_entities();
    pc.fused.assign(ne, TargetDistribution{});
    if (!config.teachers.any()) continue;

    // Detached encoder outputs for the reweight/adaptor inputs.
    Mat h, v;
    if (self_guided || config.lambda() == 1) {
      h = encode_text(*pair.embeddings, params);
      v = encode_visual(features_of(*pair.image), params);
    }

    for (int i = 0; i < ne; ++i) {
      if (config.teachers.both()) {
        TeacherWeights w;
        switch (config.fusion) {
          case FusionStrategy::average:
            w = average_weights(tt.object[i], tt.interaction[i]);
            break;
          case FusionStrategy::expert:
            w = tt.expert_weights[i];
            break;
          case FusionStrategy::self:
            w = self_reweight(tt.object[i], tt.interaction[i],
                              std::span<const double>(h.row(i), static_cast<std::size_t>(h.cols)),
                              v, adaptor);
            break;
        }
        pc.fused[i] = fuse_targets(tt.object[i], tt.interaction[i], w);
      } else if (config.teachers.object) {
        pc.fused[i] = tt.object[i];  // may be undefined; KD skips it
      } else {
        pc.fused[i] = tt.interaction[i];
      }
    }

    if (config.lambda() == 1) {
      pc.adaptor_tuples.reserve(ne);
      for (int i = 0; i < ne; ++i) {
        AdaptorTuple t;
        t.h.assign(h.row(i), h.row(i) + h.cols);
        if (config.teachers.object && tt.object[i].defined) {
          t.object_defined = true;
          t.v_object = attended_feature(tt.object[i], v);
        }
        if (config.teachers.interaction && tt.interaction[i].defined) {
          t.interaction_defined = true;
          t.v_interaction = attended_feature(tt.interaction[i], v);
        }
        // One randomly attended negative per entity per step, shared by
        // both teachers. A flat Dirichlet draw over proposals keeps the
        // negative a smooth convex combination.
        TargetDistribution neg;
        neg.defined = true;
        neg.values = negative_rng.dirichlet_flat(pair.image->num_proposals());
        t.v_negative = attended_feature(neg, v);
        pc.adaptor_tuples.push_back(std::move(t));
      }
    }
  }
  return ctx;
}

StepLosses step_losses(const TrainingSet& set, const std::vector<int>& batch,
                       const StepContext& ctx, const GrounderParams& params,
                       const AdaptorParams& adaptor, const TrainConfig& config,
                       GrounderParams* grads, AdaptorParams* adaptor_grads) {
  const int nb = static_cast<int>(batch.size());
  if (nb < 1) throw std::invalid_argument("step_losses: empty batch");

  std::vector<Mat> feats(nb), h(nb), v(nb);
  std::vector<MlpCache> hcache(nb), vcache(nb);
  for (int b = 0; b < nb; ++b) {
    const TrainingPair& pair = set.pairs[batch[b]];
    feats[b] = features_of(*pair.image);
    h[b] = encode_text(*pair.embeddings, params, &hcache[b]);
    v[b] = encode_visual(feats[b], params, &vcache[b]);
  }

  // Similarity matrices for every caption/image combination in the batch.
  std::vector<std::vector<Mat>> a(nb, std::vector<Mat>(nb));
  std::vector<std::vector<ScoreCache>> scache(nb, std::vector<ScoreCache>(nb));
  std::vector<std::vector<double>> s(nb, std::vector<double>(nb, 0.0));
  for (int c = 0; c < nb; ++c) {
    for (int i = 0; i < nb; ++i) {
      a[c][i] = similarity_matrix(h[c], v[i], params);
      s[c][i] = caption_image_score(a[c][i], &scache[c][i]);
    }
  }

  StepLosses losses;
  std::vector<std::vector<double>> ds(nb, std::vector<double>(nb, 0.0));
  for (int c = 0; c < nb; ++c) {
    for (int i = 0; i < nb; ++i) {
      if (i == c) continue;
      const double gap = s[c][i] - s[c][c] + config.margin_alpha1;
      if (gap > 0.0) {
        losses.mil += gap;
        ds[c][i] += 1.0;
        ds[c][c] -= 1.0;
      }
    }
  }

  std::vector<std::vector<Mat>> da(nb, std::vector<Mat>(nb));
  auto grad_at = [&](int c, int i) -> Mat& {
    if (da[c][i].empty()) da[c][i] = Mat(a[c][i].rows, a[c][i].cols);
    return da[c][i];
  };

  if (grads) {
    for (int c = 0; c < nb; ++c) {
      for (int i = 0; i < nb; ++i) {
        if (ds[c][i] != 0.0) {
          caption_image_score_backward(a[c][i], scache[c][i], ds[c][i], grad_at(c, i));
        }
      }
    }
  }

  if (config.teachers.any()) {
    for (int c = 0; c < nb; ++c) {
      if (grads) {
        losses.kd += kd_loss_and_grad(ctx.per_pair[c].fused, a[c][c], grad_at(c, c));
      } else {
        losses.kd += kd_loss(ctx.per_pair[c].fused, a[c][c]);
      }
    }
  }

  if (config.lambda() == 1) {
    std::vector<AdaptorTuple> all_tuples;
    for (const auto& pc : ctx.per_pair) {
      all_tuples.insert(all_tuples.end(), pc.adaptor_tuples.begin(), pc.adaptor_tuples.end());
    }
    losses.adp = adaptor_loss_and_grad(all_tuples, adaptor, config.margin_alpha2, adaptor_grads);
  }

  losses.total = losses.mil + losses.kd + config.lambda() * losses.adp;

  if (grads) {
    std::vector<Mat> dh(nb), dv(nb);
    for (int b = 0; b < nb; ++b) {
      dh[b] = Mat(h[b].rows, h[b].cols);
      dv[b] = Mat(v[b].rows, v[b].cols);
    }
    for (int c = 0; c < nb; ++c) {
      for (int i = 0; i < nb; ++i) {
        if (!da[c][i].empty()) {
          similarity_backward(h[c], v[i], params, da[c][i], dh[c], dv[i], grads->head);
        }
      }
    }
    for (int b = 0; b < nb; ++b) {
      const TrainingPair& pair = set.pairs[batch[b]];
      mlp2_backward(*pair.embeddings, params.text, hcache[b], dh[b], grads->text);
      mlp2_backward(feats[b], params.visual, vcache[b], dv[b], grads->visual);
    }
  }
  return losses;
}

TrainResult train_grounder(const std::vector<ImageRecord>& images,
                           const std::vector<UnlocalizedSceneGraph>& graphs,
                           const EntityEmbeddingTable& embeddings,
                           const ActivationMapTable& activations, const ExpertCache* expert,
                           const SynonymMatcher& matcher, const TrainConfig& config) {
  config.validate();
  TrainingSet set = TrainingSet::build(images, graphs, embeddings, config, &activations, expert);
  if (set.pairs.empty()) throw std::runtime_error("train_grounder: no trainable image-caption pairs");

  const TrainingPair& first = set.pairs.front();
  GrounderDims dims;
  dims.d_e = first.embeddings->cols;
  dims.d_v = static_cast<int>(first.image->proposals[0].feature.size());
  dims.d_h = config.hidden_dim;
  dims.d = config.embed_dim;

  TrainResult result{GrounderParams::init(dims, config.seed),
                     AdaptorParams::init(dims.d, config.seed),
                     {}};

  TeacherTable teachers = build_teacher_table(set, matcher, &activations, expert, config);

  AdamOptimizer grounder_opt(config.learning_rate);
  AdamOptimizer adaptor_opt(config.learning_rate);
  Rng shuffle_rng(substream_seed(config.seed, "trainer"));
  Rng negative_rng(substream_seed(config.seed, "sampler"));

  std::vector<int> order(set.pairs.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    EpochLog log{epoch, 0.0, 0.0, 0.0, 0.0};
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<int> batch(order.begin() + start, order.begin() + end);

      StepContext ctx = prepare_step_context(set, batch, teachers, result.params, result.adaptor,
                                             config, negative_rng);
      GrounderParams grads = GrounderParams::zeros_like(result.params);
      AdaptorParams adaptor_grads = AdaptorParams::zeros_like(result.adaptor);
      StepLosses losses = step_losses(set, batch, ctx, result.params, result.adaptor, config,
                                      &grads, config.lambda() == 1 ? &adaptor_grads : nullptr);
      if (!std::isfinite(losses.total)) {
        throw std::runtime_error("train_grounder: non-finite loss at epoch " +
                                 std::to_string(epoch) + ", batch " + std::to_string(batches) +
                                 " (mil=" + std::to_string(losses.mil) +
                                 ", kd=" + std::to_string(losses.kd) +
                                 ", adp=" + std::to_string(losses.adp) + ")");
      }
      grounder_opt.step(param_views(result.params), param_views(grads));
      if (config.lambda() == 1) {
        adaptor_opt.step(param_views(result.adaptor), param_views(adaptor_grads));
      }
      log.mil += losses.mil;
      log.kd += losses.kd;
      log.adp += losses.adp;
      log.total += losses.total;
      ++batches;
    }
    if (batches > 0) {
      log.mil /= batches;
      log.kd /= batches;
      log.adp /= batches;
      log.total /= batches;
    }
    result.log.push_back(log);
  }
  return result;
}

double grounding_top1_accuracy(const GrounderParams& params, const TrainingSet& set,
                               const std::vector<AlignmentRecord>& alignments) {
  std::map<std::string, const AlignmentRecord*> by_id;
  for (const AlignmentRecord& r : alignments) by_id[r.image_id] = &r;

  long correct = 0;
  long total = 0;
  for (const TrainingPair& pair : set.pairs) {
    auto it = by_id.find(pair.image->image_id);
    if (it == by_id.end()) continue;
    const AlignmentRecord& gold = *it->second;
    Mat h = encode_text(*pair.embeddings, params);
    Mat v = encode_visual(features_of(*pair.image), params);
    Mat a = similarity_matrix(h, v, params);
    for (int i = 0; i < a.rows && i < static_cast<int>(gold.gold.size()); ++i) {
      const double* r = a.row(i);
      int best = 0;
      for (int j = 1; j < a.cols; ++j) {
        if (r[j] > r[best]) best = j;
      }
      if (best == gold.gold[i]) ++correct;
      ++total;
    }
  }
  if (total == 0) throw std::runtime_error("grounding_top1_accuracy: no scored entities");
  return static_cast<double>(correct) / static_cast<double>(total);
}

std::string training_log_csv(const std::vector<EpochLog>& log) {
  std::string csv = "epoch,L_MIL,L_KD,L_adp,L_GD\n";
  for (const EpochLog& row : log) {
    csv += std::to_string(row.epoch) + "," + format_double(row.mil) + "," + format_double(row.kd) +
           "," + format_double(row.adp) + "," + format_double(row.total) + "\n";
  }
  return csv;
}

}  // namespace wsgg
