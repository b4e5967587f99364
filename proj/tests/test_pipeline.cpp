#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "wsgg/config.hpp"
#include "wsgg/io.hpp"
#include "wsgg/pipeline.hpp"
#include "wsgg/pseudo_labels.hpp"
#include "wsgg/synth.hpp"
#include "wsgg/teachers.hpp"

using namespace wsgg;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("wsgg_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

SynthSpec default_spec(std::uint64_t seed = 0) {
  SynthSpec spec;  // 20 images, 10 categories, 12 proposals, sigma 0.1
  spec.seed = seed;
  return spec;
}

json base_config(const std::string& out_dir) {
  return json{
      {"seed", 7},
      {"out_dir", out_dir},
      {"data",
       {{"synth",
         {{"num_images", 8},
          {"num_categories", 6},
          {"proposals_per_image", 6},
          {"entities_per_image", 2},
          {"feature_dim", 6},
          {"embed_dim", 6},
          {"expert_dim", 5},
          {"grid_size", 8},
          {"test_images", 4}}}}},
      {"training",
       {{"epochs", 2}, {"batch_size", 4}, {"hidden_dim", 6}, {"embed_dim", 6},
        {"learning_rate", 0.02}}},
      {"sgg", {{"epochs", 2}, {"hidden_dim", 8}}}};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(WSGG_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

}  // namespace

// --- synthetic generator -------------------------------------------------------

TEST_CASE("synth: zero noise points both teachers at the true boxes") {
  SynthSpec spec = default_spec(1);
  spec.feature_noise = 0.0;
  spec.embed_noise = 0.0;
  spec.label_flip_rate = 0.0;
  spec.map_offset_rate = 0.0;
  SynthDataset data = synth_dataset(spec);

  SynonymMatcher matcher;
  ActivationMapTable maps;
  for (const ActivationMap& m : data.activation_maps) maps.add(m);

  int object_hits = 0, interaction_hits = 0, total = 0;
  for (std::size_t i = 0; i < data.graphs.size(); ++i) {
    const ImageRecord& im = data.images[i];
    for (std::size_t e = 0; e < data.graphs[i].entities.size(); ++e) {
      const TextEntity& ent = data.graphs[i].entities[e];
      const int gold = data.alignments[i].gold[e];
      auto obj = object_aware_target(ent, im, matcher);
      REQUIRE(obj.defined);
      if (obj.values[gold] == 1.0) ++object_hits;
      auto inter = interaction_aware_target(ent, im, maps.require(im.image_id, ent.entity_id));
      const int argmax = static_cast<int>(std::max_element(inter.values.begin(),
                                                           inter.values.end()) -
                                          inter.values.begin());
      if (argmax == gold) ++interaction_hits;
      ++total;
    }
  }
  CHECK(object_hits == total);
  // The density measure can prefer a smaller box nested inside the blob, so
  // a handful of geometric collisions are tolerated.
  CHECK(interaction_hits >= total * 9 / 10);
}

TEST_CASE("synth: label flip rate 1 drops object-teacher accuracy to chance") {
  SynthSpec spec = default_spec(2);
  spec.label_flip_rate = 1.0;
  SynthDataset data = synth_dataset(spec);
  SynonymMatcher matcher;

  int hits = 0, defined = 0, total = 0;
  for (std::size_t i = 0; i < data.graphs.size(); ++i) {
    for (std::size_t e = 0; e < data.graphs[i].entities.size(); ++e) {
      auto obj = object_aware_target(data.graphs[i].entities[e], data.images[i], matcher);
      ++total;
      if (!obj.defined) continue;
      ++defined;
      if (obj.values[data.alignments[i].gold[e]] > 0.0) ++hits;
    }
  }
  // With every label rewritten, a defined match can only be a distractor
  // that happened to flip into the entity's category.
  CHECK(hits < total / 3);
}

TEST_CASE("synth: default spec passes all validators") {
  SynthDataset data = synth_dataset(default_spec(3));
  REQUIRE(data.images.size() == 20);
  for (const UnlocalizedSceneGraph& g : data.graphs) CHECK(validate_graph(g).empty());
  for (const ImageRecord& im : data.images) CHECK(validate_image(im, 16).empty());
  for (const ActivationMap& m : data.activation_maps) CHECK(validate_activation_map(m).empty());
  for (std::size_t i = 0; i < data.images.size(); ++i) {
    CHECK(data.embeddings.require(data.images[i].image_id).rows ==
          static_cast<int>(data.graphs[i].entities.size()));
    CHECK(data.alignments[i].gold.size() == data.graphs[i].entities.size());
  }
  CHECK(data.labels.objects.size() == 10);
}

TEST_CASE("synth: infeasible specs are rejected") {
  SynthSpec spec = default_spec();
  spec.proposals_per_image = 0;
  CHECK_THROWS_AS(synth_dataset(spec), std::invalid_argument);
  spec = default_spec();
  spec.entities_per_image = 99;
  CHECK_THROWS_AS(synth_dataset(spec), std::invalid_argument);
}

TEST_CASE("synth: same world seed aligns prototypes across splits") {
  SynthSpec a = default_spec(5);
  SynthSpec b = default_spec(6);
  b.id_prefix = "other";
  SynthDataset da = synth_dataset(a);
  SynthDataset db = synth_dataset(b);
  // Different instances, same feature geometry: matching categories have
  // nearby features (prototypes are shared through world_seed).
  CHECK(da.labels.objects == db.labels.objects);
}

// --- config ----------------------------------------------------------------------

TEST_CASE("config parses sections and propagates the root seed") {
  json j = base_config("/tmp/unused");
  PipelineConfig cfg = PipelineConfig::from_json(j);
  CHECK(cfg.seed == 7);
  CHECK(cfg.training.seed == 7);
  CHECK(cfg.sgg.seed == 7);
  CHECK(cfg.training.epochs == 2);
  CHECK(cfg.data.has_synth);
  CHECK(cfg.data.synth.num_images == 8);
  CHECK(cfg.data.synth.seed == 7);  // generator inherits the root seed
  CHECK(cfg.eval.recall_ks == std::vector<int>{20, 50, 100});
}

TEST_CASE("overrides rewrite nested keys with JSON or string values") {
  json j = base_config("/tmp/unused");
  apply_override(j, "training.epochs=9");
  apply_override(j, "training.fusion=self");
  apply_override(j, "data.synth.label_flip_rate=0.3");
  PipelineConfig cfg = PipelineConfig::from_json(j);
  CHECK(cfg.training.epochs == 9);
  CHECK(cfg.training.fusion == FusionStrategy::self);
  CHECK(cfg.data.synth.label_flip_rate == 0.3);
  CHECK_THROWS_AS(apply_override(j, "no-equals-sign"), std::invalid_argument);
}

TEST_CASE("WSGG_DATA_DIR prefixes relative data paths") {
  ::setenv("WSGG_DATA_DIR", "/base/dir", 1);
  CHECK(resolve_data_path("x.jsonl") == "/base/dir/x.jsonl");
  CHECK(resolve_data_path("/abs/x.jsonl") == "/abs/x.jsonl");
  CHECK(resolve_data_path("") == "");
  ::unsetenv("WSGG_DATA_DIR");
  CHECK(resolve_data_path("x.jsonl") == "x.jsonl");
}

// --- pipeline ----------------------------------------------------------------------

TEST_CASE("pipeline with zero epochs still produces a full report") {
  TempDir dir("pipe0");
  json j = base_config(dir.file("out"));
  j["training"]["epochs"] = 0;
  j["sgg"]["epochs"] = 0;
  PipelineConfig cfg = PipelineConfig::from_json(j);
  json report = run_pipeline(cfg);
  CHECK(report.contains("metrics"));
  CHECK(report["metrics"].contains("recall@50"));
  CHECK(report["metrics"].contains("map"));
  CHECK(report.contains("grounding"));
  CHECK(fs::exists(dir.file("out/report.json")));
  CHECK(fs::exists(dir.file("out/grounder.ckpt.json")));
  CHECK(fs::exists(dir.file("out/pseudo.jsonl")));
  CHECK(fs::exists(dir.file("out/predictions.jsonl")));
  CHECK(fs::exists(dir.file("out/training_log.csv")));
  CHECK(fs::exists(dir.file("out/per_image_recall.csv")));
}

TEST_CASE("pipeline reports are byte-identical across reruns") {
  TempDir dir("pipedet");
  json j1 = base_config(dir.file("run1"));
  json j2 = base_config(dir.file("run2"));
  run_pipeline(PipelineConfig::from_json(j1));
  run_pipeline(PipelineConfig::from_json(j2));
  for (const char* name :
       {"report.json", "pseudo.jsonl", "predictions.jsonl", "training_log.csv", "sgg_log.csv",
        "grounder.ckpt.json", "sgg.ckpt.json", "per_image_recall.csv"}) {
    const std::string a = io::read_text_file(dir.file(std::string("run1/") + name));
    const std::string b = io::read_text_file(dir.file(std::string("run2/") + name));
    CHECK_MESSAGE(a == b, name);
    CHECK_FALSE(a.empty());
  }
}

TEST_CASE("rewriting a stage output with unchanged inputs is a byte-level no-op") {
  SynthDataset data = synth_dataset(default_spec(9));
  GrounderParams params = GrounderParams::init({16, 16, 8, 8}, 3);
  TempDir dir("stage");
  auto pseudo1 = generate_pseudo_gt_all(params, data.images, data.graphs, data.embeddings, 3,
                                        nullptr);
  io::write_pseudo_jsonl(dir.file("a.jsonl"), pseudo1);
  auto pseudo2 = generate_pseudo_gt_all(params, data.images, data.graphs, data.embeddings, 3,
                                        nullptr);
  io::write_pseudo_jsonl(dir.file("b.jsonl"), pseudo2);
  CHECK(io::read_text_file(dir.file("a.jsonl")) == io::read_text_file(dir.file("b.jsonl")));
}

TEST_CASE("pipeline failures carry the stage name") {
  TempDir dir("pipefail");
  json j = base_config(dir.file("out"));
  j["data"].erase("synth");
  j["data"]["images"] = dir.file("missing.jsonl");
  j["data"]["graphs"] = dir.file("missing_too.jsonl");
  j["data"]["embeddings"] = dir.file("missing_three.jsonl");
  try {
    run_pipeline(PipelineConfig::from_json(j));
    FAIL("expected a stage error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("stage load") != std::string::npos);
  }
}

// --- CLI ---------------------------------------------------------------------------

TEST_CASE("cli: parse subcommand writes graphs") {
  TempDir dir("cliparse");
  {
    std::ofstream captions(dir.file("captions.jsonl"));
    captions << R"({"image_id":"c0","caption":"a young boy riding a skateboard"})" << "\n";
    captions << R"({"image_id":"c1","caption":"a man on a horse"})" << "\n";
  }
  const std::string rules = std::string(WSGG_TEST_DATA_DIR) + "/../../data/default_rules.json";
  const int rc = run_cli("parse --captions " + dir.file("captions.jsonl") + " --rules " + rules +
                         " --out " + dir.file("graphs.jsonl"));
  REQUIRE(rc == 0);
  auto graphs = io::read_graphs_jsonl(dir.file("graphs.jsonl"));
  REQUIRE(graphs.size() == 2);
  CHECK(graphs[0].entities.size() == 2);
  CHECK(graphs[0].edges.size() == 1);
  CHECK(graphs[1].edges[0].predicate == "on");
}

TEST_CASE("cli: run executes the full pipeline and eval rescores its output") {
  TempDir dir("clirun");
  {
    std::ofstream cfg(dir.file("config.json"));
    cfg << base_config(dir.file("out")).dump();
  }
  REQUIRE(run_cli("run --config " + dir.file("config.json")) == 0);
  REQUIRE(fs::exists(dir.file("out/predictions.jsonl")));

  const int rc = run_cli("eval --predictions " + dir.file("out/predictions.jsonl") + " --gt " +
                         dir.file("out/data/test_gt.jsonl") +
                         " --metrics recall@20,recall@50,recall@100,map --out " +
                         dir.file("eval.json"));
  REQUIRE(rc == 0);
  std::ifstream in(dir.file("eval.json"));
  json report;
  in >> report;
  CHECK(report.contains("recall@20"));
  CHECK(report.contains("map"));

  // The standalone eval must agree with the pipeline's own numbers.
  std::ifstream rin(dir.file("out/report.json"));
  json pipeline_report;
  rin >> pipeline_report;
  CHECK(pipeline_report["metrics"]["recall@50"].get<double>() ==
        report["recall@50"].get<double>());
}

TEST_CASE("cli: missing files exit nonzero") {
  CHECK(run_cli("run --config /nonexistent/config.json") != 0);
  CHECK(run_cli("eval --predictions /nope.jsonl --gt /nope.jsonl") != 0);
  CHECK(run_cli("sgg-predict --images /nope.jsonl --checkpoint /nope.json --out /tmp/x") != 0);
}
