#include "wsgg/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace wsgg {

using nlohmann::json;

namespace {

SynthSpec synth_from_json(const json& j, std::uint64_t root_seed) {
  SynthSpec s;
  s.seed = root_seed;
  s.num_images = j.value("num_images", s.num_images);
  s.num_categories = j.value("num_categories", s.num_categories);
  s.proposals_per_image = j.value("proposals_per_image", s.proposals_per_image);
  s.entities_per_image = j.value("entities_per_image", s.entities_per_image);
  s.edges_per_image = j.value("edges_per_image", s.edges_per_image);
  s.num_predicates = j.value("num_predicates", s.num_predicates);
  s.feature_noise = j.value("feature_noise", s.feature_noise);
  s.embed_noise = j.value("embed_noise", s.embed_noise);
  s.label_flip_rate = j.value("label_flip_rate", s.label_flip_rate);
  s.map_offset_rate = j.value("map_offset_rate", s.map_offset_rate);
  s.map_blur = j.value("map_blur", s.map_blur);
  s.expert_noise = j.value("expert_noise", s.expert_noise);
  s.grid_size = j.value("grid_size", s.grid_size);
  s.feature_dim = j.value("feature_dim", s.feature_dim);
  s.embed_dim = j.value("embed_dim", s.embed_dim);
  s.expert_dim = j.value("expert_dim", s.expert_dim);
  s.image_size = j.value("image_size", s.image_size);
  s.seed = j.value("seed", s.seed);
  s.world_seed = j.value("world_seed", s.world_seed);
  return s;
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& j) {
  PipelineConfig c;
  c.seed = j.value("seed", static_cast<std::uint64_t>(0));
  c.out_dir = j.value("out_dir", c.out_dir);

  if (j.contains("data")) {
    const json& d = j["data"];
    c.data.images = d.value("images", "");
    c.data.graphs = d.value("graphs", "");
    c.data.captions = d.value("captions", "");
    c.data.rules = d.value("rules", "");
    c.data.embeddings = d.value("embeddings", "");
    c.data.activations = d.value("activations", "");
    c.data.expert_cache = d.value("expert_cache", "");
    c.data.alignments = d.value("alignments", "");
    c.data.labels = d.value("labels", "");
    c.data.eval_images = d.value("eval_images", "");
    c.data.eval_gt = d.value("eval_gt", "");
    if (d.contains("synth")) {
      c.data.has_synth = true;
      c.data.synth = synth_from_json(d["synth"], c.seed);
      c.data.synth_test_images = d["synth"].value("test_images", c.data.synth_test_images);
    }
  }

  if (j.contains("training")) {
    const json& t = j["training"];
    c.training.margin_alpha1 = t.value("alpha1", c.training.margin_alpha1);
    c.training.margin_alpha2 = t.value("alpha2", c.training.margin_alpha2);
    c.training.learning_rate = t.value("learning_rate", c.training.learning_rate);
    c.training.batch_size = t.value("batch_size", c.training.batch_size);
    c.training.epochs = t.value("epochs", c.training.epochs);
    c.training.top_k = t.value("top_k", c.training.top_k);
    c.training.hidden_dim = t.value("hidden_dim", c.training.hidden_dim);
    c.training.embed_dim = t.value("embed_dim", c.training.embed_dim);
    c.training.interaction_temperature =
        t.value("interaction_temperature", c.training.interaction_temperature);
    c.training.lambda_adaptor = t.value("lambda", c.training.lambda_adaptor);
    if (t.contains("fusion")) {
      c.training.fusion = fusion_strategy_from_string(t["fusion"].get<std::string>());
    }
    if (t.contains("teachers")) {
      c.training.teachers.object = t["teachers"].value("object", true);
      c.training.teachers.interaction = t["teachers"].value("interaction", true);
    }
  }
  c.training.seed = c.seed;

  if (j.contains("sgg")) {
    const json& s = j["sgg"];
    c.sgg.learning_rate = s.value("learning_rate", c.sgg.learning_rate);
    c.sgg.epochs = s.value("epochs", c.sgg.epochs);
    c.sgg.hidden_dim = s.value("hidden_dim", c.sgg.hidden_dim);
    c.sgg.background_ratio = s.value("background_ratio", c.sgg.background_ratio);
    c.sgg.top_triplets = s.value("top_triplets", c.sgg.top_triplets);
  }
  c.sgg.seed = c.seed;

  if (j.contains("eval")) {
    const json& e = j["eval"];
    if (e.contains("recall_ks")) c.eval.recall_ks = e["recall_ks"].get<std::vector<int>>();
    c.eval.iou_threshold = e.value("iou_threshold", c.eval.iou_threshold);
  }
  return c;
}

PipelineConfig PipelineConfig::from_file(const std::string& path,
                                         const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error(path + ": malformed config: " + e.what());
  }
  for (const std::string& ov : overrides) apply_override(j, ov);
  return from_json(j);
}

nlohmann::json PipelineConfig::echo() const {
  return json{{"seed", seed},
              {"fusion", to_string(training.fusion)},
              {"teachers",
               {{"object", training.teachers.object},
                {"interaction", training.teachers.interaction}}},
              {"training",
               {{"epochs", training.epochs},
                {"batch_size", training.batch_size},
                {"learning_rate", training.learning_rate},
                {"alpha1", training.margin_alpha1},
                {"alpha2", training.margin_alpha2},
                {"top_k", training.top_k},
                {"lambda", training.lambda()}}},
              {"sgg", {{"epochs", sgg.epochs}, {"learning_rate", sgg.learning_rate}}}};
}

void apply_override(json& j, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw std::invalid_argument("override must look like key.path=value: '" + assignment + "'");
  }
  std::string key = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  std::string pointer = "/";
  for (char c : key) pointer += (c == '.') ? '/' : c;

  json parsed = json::parse(value, nullptr, false);
  if (parsed.is_discarded()) parsed = value;  // plain string
  j[json::json_pointer(pointer)] = parsed;
}

std::string resolve_data_path(const std::string& path) {
  if (path.empty()) return path;
  const char* base = std::getenv("WSGG_DATA_DIR");
  if (!base || *base == '\0') return path;
  std::filesystem::path p(path);
  if (p.is_absolute()) return path;
  return (std::filesystem::path(base) / p).string();
}

}  // namespace wsgg
