#include <cstdio>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "wsgg/config.hpp"
#include "wsgg/eval.hpp"
#include "wsgg/io.hpp"
#include "wsgg/parser.hpp"
#include "wsgg/pipeline.hpp"
#include "wsgg/pseudo_labels.hpp"
#include "wsgg/sgg.hpp"
#include "wsgg/textfmt.hpp"

using nlohmann::json;

namespace {

int cmd_parse(const std::string& captions_path, const std::string& rules_path,
              const std::string& out_path) {
  wsgg::ParserRuleSet rules = wsgg::ParserRuleSet::from_json_file(rules_path);
  std::vector<wsgg::CaptionRecord> captions = wsgg::io::read_captions_jsonl(captions_path);
  std::vector<wsgg::UnlocalizedSceneGraph> graphs;
  for (const wsgg::CaptionRecord& c : captions) {
    wsgg::UnlocalizedSceneGraph g = wsgg::parse_caption(c.caption, rules);
    g.image_id = c.image_id;
    graphs.push_back(std::move(g));
  }
  wsgg::io::write_graphs_jsonl(out_path, graphs);
  std::printf("parsed %zu captions -> %s\n", captions.size(), out_path.c_str());
  return 0;
}

int cmd_synth(const std::string& config_path, const std::string& out_dir,
              const std::vector<std::string>& overrides) {
  wsgg::PipelineConfig config = wsgg::PipelineConfig::from_file(config_path, overrides);
  if (!config.data.has_synth) throw std::runtime_error("config has no data.synth section");
  wsgg::SynthDataset data = wsgg::synth_dataset(config.data.synth);
  std::filesystem::create_directories(out_dir);
  wsgg::io::write_images_jsonl(out_dir + "/images.jsonl", data.images);
  wsgg::io::write_graphs_jsonl(out_dir + "/graphs.jsonl", data.graphs);
  wsgg::io::write_embeddings_jsonl(out_dir + "/embeddings.jsonl", data.embeddings);
  wsgg::io::write_activation_maps_jsonl(out_dir + "/activations.jsonl", data.activation_maps);
  wsgg::io::write_expert_cache_jsonl(out_dir + "/expert_cache.jsonl", data.expert);
  wsgg::io::write_alignments_jsonl(out_dir + "/alignments.jsonl", data.alignments);
  wsgg::io::write_gt_jsonl(out_dir + "/gt.jsonl", data.gt);
  wsgg::io::write_labels_json(out_dir + "/labels.json", data.labels);
  std::printf("synthesized %zu images -> %s\n", data.images.size(), out_dir.c_str());
  return 0;
}

int cmd_ground_train(const std::string& images, const std::string& graphs,
                     const std::string& embeddings, const std::string& activations,
                     const std::string& expert_cache, const std::string& rules,
                     const std::string& config_path, const std::string& out_path,
                     const std::string& log_path, const std::vector<std::string>& overrides) {
  wsgg::PipelineConfig config = wsgg::PipelineConfig::from_file(config_path, overrides);
  wsgg::SynonymMatcher matcher;
  if (!rules.empty()) matcher = wsgg::ParserRuleSet::from_json_file(rules).synonyms;

  auto image_recs = wsgg::io::read_images_jsonl(wsgg::resolve_data_path(images));
  auto graph_recs = wsgg::ingest_parsed_triplets(wsgg::resolve_data_path(graphs), matcher);
  auto emb = wsgg::io::read_embeddings_jsonl(wsgg::resolve_data_path(embeddings));
  wsgg::ActivationMapTable maps;
  if (!activations.empty()) {
    for (wsgg::ActivationMap& m :
         wsgg::io::read_activation_maps(wsgg::resolve_data_path(activations))) {
      maps.add(std::move(m));
    }
  }
  wsgg::ExpertCache expert;
  bool have_expert = false;
  if (!expert_cache.empty()) {
    expert = wsgg::io::read_expert_cache_jsonl(wsgg::resolve_data_path(expert_cache));
    have_expert = true;
  }

  wsgg::TrainResult result = wsgg::train_grounder(image_recs, graph_recs, emb, maps,
                                                  have_expert ? &expert : nullptr, matcher,
                                                  config.training);
  wsgg::io::write_grounder_checkpoint(
      out_path, result.params,
      config.training.fusion == wsgg::FusionStrategy::self ? &result.adaptor : nullptr);
  if (!log_path.empty()) {
    wsgg::io::write_text_file(log_path, wsgg::training_log_csv(result.log));
  }
  if (!result.log.empty()) {
    const wsgg::EpochLog& last = result.log.back();
    std::printf("trained %d epochs; final L_GD=%s -> %s\n", last.epoch,
                wsgg::format_double(last.total).c_str(), out_path.c_str());
  } else {
    std::printf("zero epochs; wrote initialization -> %s\n", out_path.c_str());
  }
  return 0;
}

int cmd_pseudo_gen(const std::string& checkpoint, const std::string& images,
                   const std::string& graphs, const std::string& embeddings, int top_k,
                   const std::string& out_path) {
  wsgg::AdaptorParams adaptor;
  wsgg::GrounderParams params = wsgg::io::read_grounder_checkpoint(checkpoint, &adaptor);
  auto image_recs = wsgg::io::read_images_jsonl(wsgg::resolve_data_path(images));
  auto graph_recs = wsgg::io::read_graphs_jsonl(wsgg::resolve_data_path(graphs));
  auto emb = wsgg::io::read_embeddings_jsonl(wsgg::resolve_data_path(embeddings));
  int skipped = 0;
  auto pseudo = wsgg::generate_pseudo_gt_all(params, image_recs, graph_recs, emb, top_k, &skipped);
  wsgg::io::write_pseudo_jsonl(out_path, pseudo);
  std::printf("pseudo ground truth for %zu images (%d skipped) -> %s\n", pseudo.size(), skipped,
              out_path.c_str());
  return 0;
}

int cmd_sgg_train(const std::string& pseudo, const std::string& images, const std::string& labels,
                  const std::string& config_path, const std::string& out_path,
                  const std::string& log_path, const std::vector<std::string>& overrides) {
  wsgg::PipelineConfig config = wsgg::PipelineConfig::from_file(config_path, overrides);
  auto pseudo_recs = wsgg::io::read_pseudo_jsonl(wsgg::resolve_data_path(pseudo));
  auto image_recs = wsgg::io::read_images_jsonl(wsgg::resolve_data_path(images));
  wsgg::LabelSpaces spaces;
  if (!labels.empty()) {
    spaces = wsgg::io::read_labels_json(wsgg::resolve_data_path(labels));
  } else {
    std::set<std::string> objs, preds;
    for (const auto& g : pseudo_recs) {
      for (const auto& e : g.grounded_entities) objs.insert(e.lemma);
      for (const auto& e : g.edges) preds.insert(e.predicate);
    }
    spaces = {std::vector<std::string>(objs.begin(), objs.end()),
              std::vector<std::string>(preds.begin(), preds.end())};
  }
  wsgg::SggTrainResult result = wsgg::sgg_train(pseudo_recs, image_recs, spaces, config.sgg);
  wsgg::write_sgg_checkpoint(out_path, result.params);
  if (!log_path.empty()) wsgg::io::write_text_file(log_path, wsgg::sgg_log_csv(result.log));
  std::printf("SGG model trained (%d entities, %d edges skipped) -> %s\n",
              result.skipped_entities, result.skipped_edges, out_path.c_str());
  return 0;
}

int cmd_sgg_predict(const std::string& images, const std::string& checkpoint, int top_triplets,
                    const std::string& out_path) {
  wsgg::SggParams params = wsgg::read_sgg_checkpoint(checkpoint);
  auto image_recs = wsgg::io::read_images_jsonl(wsgg::resolve_data_path(images));
  std::vector<wsgg::SceneGraphPrediction> predictions;
  for (const wsgg::ImageRecord& im : image_recs) {
    if (im.proposals.empty()) continue;
    predictions.push_back(wsgg::sgg_predict(im, params, top_triplets));
  }
  wsgg::io::write_predictions_jsonl(out_path, predictions);
  std::printf("predictions for %zu images -> %s\n", predictions.size(), out_path.c_str());
  return 0;
}

int cmd_eval(const std::string& predictions, const std::string& gt, const std::string& metrics,
             double iou_threshold, const std::string& out_path, const std::string& csv_path) {
  auto preds = wsgg::io::read_predictions_jsonl(wsgg::resolve_data_path(predictions));
  auto gt_recs = wsgg::io::read_gt_jsonl(wsgg::resolve_data_path(gt));

  std::vector<int> recall_ks;
  bool want_map = false;
  {
    std::string token;
    std::stringstream ss(metrics);
    while (std::getline(ss, token, ',')) {
      if (token == "map") {
        want_map = true;
      } else if (token.rfind("recall@", 0) == 0) {
        recall_ks.push_back(std::stoi(token.substr(7)));
      } else if (!token.empty()) {
        throw std::runtime_error("unknown metric '" + token + "' (want recall@K or map)");
      }
    }
  }

  json report;
  for (int k : recall_ks) {
    report["recall@" + std::to_string(k)] = wsgg::mean_recall_at_k(preds, gt_recs, k, iou_threshold);
  }
  if (want_map) report["map"] = wsgg::detection_map(preds, gt_recs, iou_threshold);

  if (!csv_path.empty() && !recall_ks.empty()) {
    std::string csv = "image_id";
    for (int k : recall_ks) csv += ",recall@" + std::to_string(k);
    csv += "\n";
    for (const wsgg::ImageGroundTruth& g : gt_recs) {
      if (g.triplets.empty()) continue;
      const wsgg::SceneGraphPrediction* pred = nullptr;
      for (const auto& p : preds) {
        if (p.image_id == g.image_id) {
          pred = &p;
          break;
        }
      }
      static const wsgg::SceneGraphPrediction kEmpty{};
      csv += g.image_id;
      for (int k : recall_ks) {
        csv += "," + wsgg::format_double(
                         wsgg::recall_at_k(pred ? *pred : kEmpty, g.triplets, k, iou_threshold));
      }
      csv += "\n";
    }
    wsgg::io::write_text_file(csv_path, csv);
  }

  const std::string text = report.dump(2) + "\n";
  if (out_path.empty()) {
    std::fputs(text.c_str(), stdout);
  } else {
    wsgg::io::write_text_file(out_path, text);
    std::fputs(text.c_str(), stdout);
  }
  return 0;
}

int cmd_run(const std::string& config_path, const std::vector<std::string>& overrides) {
  wsgg::PipelineConfig config = wsgg::PipelineConfig::from_file(config_path, overrides);
  json report = wsgg::run_pipeline(config);
  std::printf("%s\n", report.dump(2).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weakly supervised scene-graph pipeline"};
  app.require_subcommand(1);

  std::string captions, rules, out, config_path, images, graphs, embeddings, activations;
  std::string expert_cache, checkpoint, pseudo, labels, gt, predictions, log_path, csv_path;
  std::string metrics = "recall@20,recall@50,recall@100,map";
  std::string out_dir = "synth_data";
  double iou_threshold = 0.5;
  int top_k = 3;
  int top_triplets = 100;
  std::vector<std::string> overrides;

  CLI::App* parse = app.add_subcommand("parse", "parse captions into unlocalized scene graphs");
  parse->add_option("--captions", captions)->required();
  parse->add_option("--rules", rules)->required();
  parse->add_option("--out", out)->required();

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic benchmark dataset");
  synth->add_option("--config", config_path)->required();
  synth->add_option("--out-dir", out_dir);
  synth->add_option("--override", overrides, "key.path=value config override");

  CLI::App* gtrain = app.add_subcommand("ground-train", "train the grounding network");
  gtrain->add_option("--images", images)->required();
  gtrain->add_option("--graphs", graphs)->required();
  gtrain->add_option("--embeddings", embeddings)->required();
  gtrain->add_option("--activations", activations);
  gtrain->add_option("--expert-cache", expert_cache);
  gtrain->add_option("--rules", rules);
  gtrain->add_option("--config", config_path)->required();
  gtrain->add_option("--out", out)->required();
  gtrain->add_option("--log", log_path);
  gtrain->add_option("--override", overrides);

  CLI::App* pgen = app.add_subcommand("pseudo-gen", "generate pseudo ground truth");
  pgen->add_option("--checkpoint", checkpoint)->required();
  pgen->add_option("--images", images)->required();
  pgen->add_option("--graphs", graphs)->required();
  pgen->add_option("--embeddings", embeddings)->required();
  pgen->add_option("--top-k", top_k);
  pgen->add_option("--out", out)->required();

  CLI::App* strain = app.add_subcommand("sgg-train", "train the SGG classifier on pseudo labels");
  strain->add_option("--pseudo", pseudo)->required();
  strain->add_option("--images", images)->required();
  strain->add_option("--labels", labels);
  strain->add_option("--config", config_path)->required();
  strain->add_option("--out", out)->required();
  strain->add_option("--log", log_path);
  strain->add_option("--override", overrides);

  CLI::App* spred = app.add_subcommand("sgg-predict", "predict scene graphs");
  spred->add_option("--images", images)->required();
  spred->add_option("--checkpoint", checkpoint)->required();
  spred->add_option("--top-triplets", top_triplets);
  spred->add_option("--out", out)->required();

  CLI::App* evalc = app.add_subcommand("eval", "score predictions against ground truth");
  evalc->add_option("--predictions", predictions)->required();
  evalc->add_option("--gt", gt)->required();
  evalc->add_option("--metrics", metrics);
  evalc->add_option("--iou-threshold", iou_threshold);
  evalc->add_option("--out", out);
  evalc->add_option("--per-image-csv", csv_path);

  CLI::App* run = app.add_subcommand("run", "run the full pipeline from a config file");
  run->add_option("--config", config_path)->required();
  run->add_option("--override", overrides);

  CLI11_PARSE(app, argc, argv);

  try {
    if (parse->parsed()) return cmd_parse(captions, rules, out);
    if (synth->parsed()) return cmd_synth(config_path, out_dir, overrides);
    if (gtrain->parsed()) {
      return cmd_ground_train(images, graphs, embeddings, activations, expert_cache, rules,
                              config_path, out, log_path, overrides);
    }
    if (pgen->parsed()) return cmd_pseudo_gen(checkpoint, images, graphs, embeddings, top_k, out);
    if (strain->parsed()) {
      return cmd_sgg_train(pseudo, images, labels, config_path, out, log_path, overrides);
    }
    if (spred->parsed()) return cmd_sgg_predict(images, checkpoint, top_triplets, out);
    if (evalc->parsed()) return cmd_eval(predictions, gt, metrics, iou_threshold, out, csv_path);
    if (run->parsed()) return cmd_run(config_path, overrides);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
