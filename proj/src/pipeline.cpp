#include "wsgg/pipeline.hpp"

#include <filesystem>
#include <set>
#include <stdexcept>

#include "wsgg/eval.hpp"
#include "wsgg/io.hpp"
#include "wsgg/parser.hpp"
#include "wsgg/pseudo_labels.hpp"
#include "wsgg/textfmt.hpp"

namespace wsgg {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

template <typename Fn>
auto stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const std::exception& e) {
    throw std::runtime_error("stage " + name + ": " + e.what());
  }
}

struct PipelineData {
  std::vector<ImageRecord> images;
  std::vector<UnlocalizedSceneGraph> graphs;
  EntityEmbeddingTable embeddings;
  ActivationMapTable activations;
  ExpertCache expert;
  bool have_expert = false;
  std::vector<AlignmentRecord> alignments;
  LabelSpaces labels;
  bool have_labels = false;
  std::vector<ImageRecord> eval_images;
  std::vector<ImageGroundTruth> eval_gt;
  SynonymMatcher matcher;
  bool parsed_captions = false;
};

PipelineData materialize_data(const PipelineConfig& config, const std::string& out) {
  PipelineData d;
  if (config.data.has_synth) {
    stage("synth", [&] {
      SynthSpec spec = config.data.synth;
      SynthDataset train = synth_dataset(spec);

      SynthSpec test_spec = spec;
      test_spec.seed = substream_seed(spec.seed, "synth-test");
      test_spec.num_images = std::max(0, config.data.synth_test_images);
      test_spec.id_prefix = spec.id_prefix + "test";

      fs::create_directories(out + "/data");
      io::write_images_jsonl(out + "/data/images.jsonl", train.images);
      io::write_graphs_jsonl(out + "/data/graphs.jsonl", train.graphs);
      io::write_embeddings_jsonl(out + "/data/embeddings.jsonl", train.embeddings);
      io::write_activation_maps_jsonl(out + "/data/activations.jsonl", train.activation_maps);
      io::write_expert_cache_jsonl(out + "/data/expert_cache.jsonl", train.expert);
      io::write_alignments_jsonl(out + "/data/alignments.jsonl", train.alignments);
      io::write_gt_jsonl(out + "/data/gt.jsonl", train.gt);
      io::write_labels_json(out + "/data/labels.json", train.labels);

      d.images = std::move(train.images);
      d.graphs = std::move(train.graphs);
      d.embeddings = std::move(train.embeddings);
      for (ActivationMap& m : train.activation_maps) d.activations.add(std::move(m));
      d.expert = std::move(train.expert);
      d.have_expert = true;
      d.alignments = std::move(train.alignments);
      d.labels = std::move(train.labels);
      d.have_labels = true;

      if (test_spec.num_images > 0) {
        SynthDataset test = synth_dataset(test_spec);
        io::write_images_jsonl(out + "/data/test_images.jsonl", test.images);
        io::write_gt_jsonl(out + "/data/test_gt.jsonl", test.gt);
        d.eval_images = std::move(test.images);
        d.eval_gt = std::move(test.gt);
      }
      return 0;
    });
    return d;
  }

  stage("load", [&] {
    if (config.data.images.empty()) throw std::runtime_error("data.images is required");
    d.images = io::read_images_jsonl(resolve_data_path(config.data.images));
    if (!config.data.rules.empty()) {
      ParserRuleSet rules = ParserRuleSet::from_json_file(resolve_data_path(config.data.rules));
      d.matcher = rules.synonyms;
      if (config.data.graphs.empty()) {
        if (config.data.captions.empty()) {
          throw std::runtime_error("need data.graphs or data.captions with data.rules");
        }
        std::vector<CaptionRecord> captions =
            io::read_captions_jsonl(resolve_data_path(config.data.captions));
        for (const CaptionRecord& c : captions) {
          UnlocalizedSceneGraph g = parse_caption(c.caption, rules);
          g.image_id = c.image_id;
          d.graphs.push_back(std::move(g));
        }
        d.parsed_captions = true;
      }
    }
    if (d.graphs.empty()) {
      if (config.data.graphs.empty()) throw std::runtime_error("data.graphs is required");
      d.graphs = ingest_parsed_triplets(resolve_data_path(config.data.graphs), d.matcher);
    }
    if (config.data.embeddings.empty()) throw std::runtime_error("data.embeddings is required");
    d.embeddings = io::read_embeddings_jsonl(resolve_data_path(config.data.embeddings));
    if (!config.data.activations.empty()) {
      for (ActivationMap& m : io::read_activation_maps(resolve_data_path(config.data.activations))) {
        d.activations.add(std::move(m));
      }
    }
    if (!config.data.expert_cache.empty()) {
      d.expert = io::read_expert_cache_jsonl(resolve_data_path(config.data.expert_cache));
      d.have_expert = true;
    }
    if (!config.data.alignments.empty()) {
      d.alignments = io::read_alignments_jsonl(resolve_data_path(config.data.alignments));
    }
    if (!config.data.labels.empty()) {
      d.labels = io::read_labels_json(resolve_data_path(config.data.labels));
      d.have_labels = true;
    }
    if (!config.data.eval_images.empty()) {
      d.eval_images = io::read_images_jsonl(resolve_data_path(config.data.eval_images));
    }
    if (!config.data.eval_gt.empty()) {
      d.eval_gt = io::read_gt_jsonl(resolve_data_path(config.data.eval_gt));
    }
    return 0;
  });
  return d;
}

// Sorted unique lemmas and predicates when no label file is given.
LabelSpaces derive_labels(const std::vector<PseudoSceneGraph>& pseudo) {
  std::set<std::string> objects, predicates;
  for (const PseudoSceneGraph& g : pseudo) {
    for (const GroundedEntity& e : g.grounded_entities) objects.insert(e.lemma);
    for (const GraphEdge& e : g.edges) predicates.insert(e.predicate);
  }
  return {std::vector<std::string>(objects.begin(), objects.end()),
          std::vector<std::string>(predicates.begin(), predicates.end())};
}

}  // namespace

json run_pipeline(const PipelineConfig& config) {
  fs::create_directories(config.out_dir);
  const std::string out = config.out_dir;

  json report;
  report["config"] = config.echo();

  PipelineData data = materialize_data(config, out);
  if (data.parsed_captions) {
    io::write_graphs_jsonl(out + "/graphs.jsonl", data.graphs);
  }

  TrainResult trained = stage("ground-train", [&] {
    return train_grounder(data.images, data.graphs, data.embeddings, data.activations,
                          data.have_expert ? &data.expert : nullptr, data.matcher,
                          config.training);
  });
  io::write_grounder_checkpoint(
      out + "/grounder.ckpt.json", trained.params,
      config.training.fusion == FusionStrategy::self ? &trained.adaptor : nullptr);
  io::write_text_file(out + "/training_log.csv", training_log_csv(trained.log));

  json epochs = json::array();
  for (const EpochLog& e : trained.log) {
    epochs.push_back({{"epoch", e.epoch},
                      {"L_MIL", e.mil},
                      {"L_KD", e.kd},
                      {"L_adp", e.adp},
                      {"L_GD", e.total}});
  }
  report["training"] = {{"epochs", std::move(epochs)}};
  if (!trained.log.empty()) {
    const EpochLog& last = trained.log.back();
    report["training"]["final"] = {
        {"L_MIL", last.mil}, {"L_KD", last.kd}, {"L_adp", last.adp}, {"L_GD", last.total}};
  }

  if (!data.alignments.empty()) {
    const double acc = stage("grounding-accuracy", [&] {
      TrainConfig probe = config.training;
      probe.teachers = {false, false};
      probe.fusion = FusionStrategy::average;
      probe.lambda_adaptor = -1;
      TrainingSet set =
          TrainingSet::build(data.images, data.graphs, data.embeddings, probe, nullptr, nullptr);
      return grounding_top1_accuracy(trained.params, set, data.alignments);
    });
    report["grounding"] = {{"top1_accuracy", acc}};
  }

  int pseudo_skipped = 0;
  std::vector<PseudoSceneGraph> pseudo = stage("pseudo-gen", [&] {
    return generate_pseudo_gt_all(trained.params, data.images, data.graphs, data.embeddings,
                                  config.training.top_k, &pseudo_skipped);
  });
  io::write_pseudo_jsonl(out + "/pseudo.jsonl", pseudo);
  report["pseudo"] = {{"graphs", pseudo.size()}, {"skipped", pseudo_skipped}};

  if (!data.have_labels) data.labels = derive_labels(pseudo);

  SggTrainResult sgg_trained =
      stage("sgg-train", [&] { return sgg_train(pseudo, data.images, data.labels, config.sgg); });
  write_sgg_checkpoint(out + "/sgg.ckpt.json", sgg_trained.params);
  io::write_text_file(out + "/sgg_log.csv", sgg_log_csv(sgg_trained.log));
  report["sgg"] = {{"skipped_entities", sgg_trained.skipped_entities},
                   {"skipped_edges", sgg_trained.skipped_edges}};
  if (!sgg_trained.log.empty()) {
    const SggEpochLog& last = sgg_trained.log.back();
    report["sgg"]["final"] = {
        {"L_obj", last.object_loss}, {"L_rel", last.predicate_loss}, {"L_SGG", last.total}};
  }

  if (!data.eval_images.empty()) {
    std::vector<SceneGraphPrediction> predictions = stage("sgg-predict", [&] {
      std::vector<SceneGraphPrediction> out_preds;
      for (const ImageRecord& im : data.eval_images) {
        if (im.proposals.empty()) continue;
        out_preds.push_back(sgg_predict(im, sgg_trained.params, config.sgg.top_triplets));
      }
      return out_preds;
    });
    io::write_predictions_jsonl(out + "/predictions.jsonl", predictions);

    if (!data.eval_gt.empty()) {
      json metrics = stage("eval", [&] {
        json m;
        std::string csv = "image_id";
        for (int k : config.eval.recall_ks) csv += ",recall@" + std::to_string(k);
        csv += "\n";
        for (const ImageGroundTruth& g : data.eval_gt) {
          if (g.triplets.empty()) continue;
          const SceneGraphPrediction* pred = nullptr;
          for (const SceneGraphPrediction& p : predictions) {
            if (p.image_id == g.image_id) {
              pred = &p;
              break;
            }
          }
          static const SceneGraphPrediction kEmpty{};
          csv += g.image_id;
          for (int k : config.eval.recall_ks) {
            csv += "," + format_double(recall_at_k(pred ? *pred : kEmpty, g.triplets, k,
                                                   config.eval.iou_threshold));
          }
          csv += "\n";
        }
        io::write_text_file(out + "/per_image_recall.csv", csv);

        for (int k : config.eval.recall_ks) {
          m["recall@" + std::to_string(k)] =
              mean_recall_at_k(predictions, data.eval_gt, k, config.eval.iou_threshold);
        }
        m["map"] = detection_map(predictions, data.eval_gt, config.eval.iou_threshold);
        return m;
      });
      report["metrics"] = std::move(metrics);
    }
  }

  io::write_text_file(out + "/report.json", report.dump(2) + "\n");
  return report;
}

}  // namespace wsgg
