#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "wsgg/io.hpp"
#include "wsgg/parser.hpp"
#include "wsgg/rng.hpp"
#include "wsgg/types.hpp"

using namespace wsgg;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("wsgg_core_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

UnlocalizedSceneGraph two_entity_graph() {
  UnlocalizedSceneGraph g;
  g.image_id = "img0";
  g.entities.push_back({0, "boy", std::make_pair(0, 1), 0});
  g.entities.push_back({1, "skateboard", std::make_pair(2, 3), 1});
  g.edges.push_back({0, "riding", 1});
  return g;
}

ParserRuleSet test_rules() {
  return make_rule_set(
      {"boy", "skateboard", "man", "horse", "sky", "dog", "chair", "light", "traffic"},
      {"riding", "sitting", "holding"}, {"on", "near", "under"},
      {"a", "an", "the", "young", "old", "is", "two"}, {{"kid", "boy"}, {"child", "boy"}});
}

}  // namespace

TEST_CASE("validate_graph flags self-loops") {
  UnlocalizedSceneGraph g = two_entity_graph();
  g.edges.push_back({0, "on", 0});
  auto report = validate_graph(g);
  REQUIRE(report.size() == 1);
  CHECK(report[0].find("self-loop") != std::string::npos);
}

TEST_CASE("validate_graph accepts a well-formed graph") {
  CHECK(validate_graph(two_entity_graph()).empty());
}

TEST_CASE("validate_graph flags out-of-range indices") {
  UnlocalizedSceneGraph g = two_entity_graph();
  g.edges.push_back({0, "near", 5});
  auto report = validate_graph(g);
  REQUIRE(report.size() == 1);
  CHECK(report[0].find("index out of range") != std::string::npos);
}

TEST_CASE("validate_graph flags duplicates and bad lemmas") {
  UnlocalizedSceneGraph g = two_entity_graph();
  g.edges.push_back({0, "riding", 1});
  g.entities[0].lemma = "Boy";
  auto report = validate_graph(g);
  CHECK(report.size() == 2);
}

TEST_CASE("image validation checks boxes, scores and feature dims") {
  ImageRecord im;
  im.image_id = "img";
  im.width = 100;
  im.height = 100;
  im.proposals.push_back({{10, 10, 20, 20}, "dog", 0.9, {1.0, 2.0}});
  CHECK(validate_image(im, 2).empty());

  im.proposals.push_back({{30, 30, 20, 40}, "cat", 0.5, {1.0, 2.0}});   // degenerate
  im.proposals.push_back({{10, 10, 120, 20}, "cat", 0.5, {1.0, 2.0}});  // outside
  im.proposals.push_back({{10, 10, 20, 20}, "cat", 1.5, {1.0}});        // score + dim
  CHECK(validate_image(im, 2).size() == 4);
}

TEST_CASE("serialization round-trips every core record type") {
  TempDir dir;
  Rng rng(42);

  std::vector<ImageRecord> images(3);
  for (int i = 0; i < 3; ++i) {
    images[i].image_id = "img" + std::to_string(i);
    images[i].width = 640;
    images[i].height = 480;
    for (int j = 0; j < 4; ++j) {
      RegionProposal p;
      const double x1 = rng.next_double() * 300;
      const double y1 = rng.next_double() * 200;
      p.box = {x1, y1, x1 + 1 + rng.next_double() * 100, y1 + 1 + rng.next_double() * 100};
      p.label = j % 2 ? "dog" : "cat";
      p.score = rng.next_double();
      for (int k = 0; k < 5; ++k) p.feature.push_back(rng.normal());
      images[i].proposals.push_back(std::move(p));
    }
  }
  io::write_images_jsonl(dir.file("images.jsonl"), images);
  auto images2 = io::read_images_jsonl(dir.file("images.jsonl"));
  REQUIRE(images2.size() == images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    CHECK(images2[i].image_id == images[i].image_id);
    REQUIRE(images2[i].proposals.size() == images[i].proposals.size());
    for (std::size_t j = 0; j < images[i].proposals.size(); ++j) {
      CHECK(images2[i].proposals[j].box.x1 == images[i].proposals[j].box.x1);
      CHECK(images2[i].proposals[j].score == images[i].proposals[j].score);
      CHECK(images2[i].proposals[j].feature == images[i].proposals[j].feature);
      CHECK(images2[i].proposals[j].label == images[i].proposals[j].label);
    }
  }

  std::vector<UnlocalizedSceneGraph> graphs{two_entity_graph()};
  io::write_graphs_jsonl(dir.file("graphs.jsonl"), graphs);
  auto graphs2 = io::read_graphs_jsonl(dir.file("graphs.jsonl"));
  REQUIRE(graphs2.size() == 1);
  CHECK(graphs2[0].image_id == graphs[0].image_id);
  CHECK(graphs2[0].entities[1].lemma == "skateboard");
  CHECK(graphs2[0].entities[1].caption_span == std::make_pair(2, 3));
  CHECK(graphs2[0].edges[0] == graphs[0].edges[0]);

  EntityEmbeddingTable table;
  Mat rows(2, 3);
  for (double& v : rows.data) v = rng.normal();
  table.rows_by_image["img0"] = rows;
  io::write_embeddings_jsonl(dir.file("emb.jsonl"), table);
  auto table2 = io::read_embeddings_jsonl(dir.file("emb.jsonl"));
  CHECK(table2.require("img0").data == rows.data);

  std::vector<ActivationMap> maps(1);
  maps[0].image_id = "img0";
  maps[0].entity_id = 1;
  maps[0].grid_h = 2;
  maps[0].grid_w = 3;
  maps[0].scale_x = 10.5;
  maps[0].scale_y = 8.25;
  maps[0].grid = {0.0, 0.5, 1.0, 0.25, 0.125, 2.0};
  io::write_activation_maps_jsonl(dir.file("maps.jsonl"), maps);
  auto maps2 = io::read_activation_maps(dir.file("maps.jsonl"));
  REQUIRE(maps2.size() == 1);
  CHECK(maps2[0].grid == maps[0].grid);
  CHECK(maps2[0].scale_x == maps[0].scale_x);

  std::vector<PseudoSceneGraph> pseudo(1);
  pseudo[0].image_id = "img0";
  pseudo[0].grounded_entities.push_back({"boy", {2, 0, 1}, {0.9, 0.5, 0.1}});
  pseudo[0].edges.push_back({0, "riding", 1});
  io::write_pseudo_jsonl(dir.file("pseudo.jsonl"), pseudo);
  auto pseudo2 = io::read_pseudo_jsonl(dir.file("pseudo.jsonl"));
  CHECK(pseudo2[0].grounded_entities[0].candidates == pseudo[0].grounded_entities[0].candidates);
  CHECK(pseudo2[0].grounded_entities[0].lemma == "boy");

  std::vector<SceneGraphPrediction> preds(1);
  preds[0].image_id = "img0";
  preds[0].detections.push_back({{1, 2, 3, 4}, "dog", 0.75});
  preds[0].triplets.push_back({{1, 2, 3, 4}, "dog", "on", {5, 6, 7, 8}, "cat", 0.5});
  io::write_predictions_jsonl(dir.file("preds.jsonl"), preds);
  auto preds2 = io::read_predictions_jsonl(dir.file("preds.jsonl"));
  CHECK(preds2[0].triplets[0].predicate == "on");
  CHECK(preds2[0].detections[0].score == 0.75);

  std::vector<AlignmentRecord> aligns{{"img0", {3, 1}}};
  io::write_alignments_jsonl(dir.file("aligns.jsonl"), aligns);
  CHECK(io::read_alignments_jsonl(dir.file("aligns.jsonl"))[0].gold == aligns[0].gold);
}

TEST_CASE("binary activation maps round-trip through the sidecar") {
  TempDir dir;
  std::vector<ActivationMap> maps(2);
  for (int i = 0; i < 2; ++i) {
    maps[i].image_id = "img" + std::to_string(i);
    maps[i].entity_id = i;
    maps[i].grid_h = 3;
    maps[i].grid_w = 2;
    maps[i].scale_x = 4.0;
    maps[i].scale_y = 4.0;
    // float32-representable values survive the raw stream exactly
    maps[i].grid = {0.5, 0.25, 1.0, 0.0, 2.0, 0.125};
  }
  io::write_activation_maps_binary(dir.file("maps.sidecar.json"), dir.file("maps.bin"), maps);
  auto maps2 = io::read_activation_maps(dir.file("maps.sidecar.json"));
  REQUIRE(maps2.size() == 2);
  CHECK(maps2[1].grid == maps[1].grid);
  CHECK(maps2[0].image_id == "img0");
}

TEST_CASE("malformed jsonl reports the line number") {
  TempDir dir;
  std::ofstream out(dir.file("bad.jsonl"));
  out << R"({"image_id":"a","entities":[],"edges":[]})" << "\n";
  out << "{not json\n";
  out.close();
  try {
    io::read_graphs_jsonl(dir.file("bad.jsonl"));
    FAIL("expected a parse error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("grounder checkpoints round-trip params and adaptor") {
  TempDir dir;
  GrounderParams p = GrounderParams::init({6, 7, 5, 4}, 99);
  AdaptorParams a = AdaptorParams::init(4, 99);
  io::write_grounder_checkpoint(dir.file("g.ckpt.json"), p, &a);
  AdaptorParams a2;
  GrounderParams p2 = io::read_grounder_checkpoint(dir.file("g.ckpt.json"), &a2);
  CHECK(p2.text.l1.w.data == p.text.l1.w.data);
  CHECK(p2.visual.l2.b == p.visual.l2.b);
  CHECK(p2.head.w == p.head.w);
  CHECK(a2.w == a.w);
  CHECK(p2.seed == p.seed);
}

// --- caption parsing ---------------------------------------------------------

TEST_CASE("parse_caption: verb pattern") {
  auto g = parse_caption("a young boy riding a skateboard", test_rules());
  REQUIRE(g.entities.size() == 2);
  CHECK(g.entities[0].lemma == "boy");
  CHECK(g.entities[1].lemma == "skateboard");
  REQUIRE(g.edges.size() == 1);
  CHECK(g.edges[0] == GraphEdge{0, "riding", 1});
  CHECK(validate_graph(g).empty());
}

TEST_CASE("parse_caption: preposition pattern") {
  auto g = parse_caption("a man on a horse", test_rules());
  REQUIRE(g.entities.size() == 2);
  CHECK(g.entities[0].lemma == "man");
  CHECK(g.entities[1].lemma == "horse");
  REQUIRE(g.edges.size() == 1);
  CHECK(g.edges[0] == GraphEdge{0, "on", 1});
}

TEST_CASE("parse_caption: verb+preposition pattern") {
  auto g = parse_caption("a boy sitting on a chair", test_rules());
  REQUIRE(g.edges.size() == 1);
  CHECK(g.edges[0].predicate == "sitting on");
}

TEST_CASE("parse_caption: noun with no predicate") {
  auto g = parse_caption("the sky", test_rules());
  REQUIRE(g.entities.size() == 1);
  CHECK(g.entities[0].lemma == "sky");
  CHECK(g.edges.empty());
}

TEST_CASE("parse_caption: empty caption is an error") {
  CHECK_THROWS_AS(parse_caption("", test_rules()), std::invalid_argument);
  CHECK_THROWS_AS(parse_caption("   ", test_rules()), std::invalid_argument);
}

TEST_CASE("parse_caption: no lexicon nouns yields an empty graph") {
  auto g = parse_caption("quickly running around", test_rules());
  CHECK(g.entities.empty());
  CHECK(g.edges.empty());
}

TEST_CASE("parse_caption: head noun is the last token of a noun run") {
  auto g = parse_caption("a traffic light on a horse", test_rules());
  REQUIRE(g.entities.size() == 2);
  CHECK(g.entities[0].lemma == "light");
  CHECK(g.entities[0].caption_span == std::make_pair(1, 3));
}

TEST_CASE("parse_caption: plural nouns singularize") {
  auto g = parse_caption("two dogs sitting on chairs", test_rules());
  REQUIRE(g.entities.size() == 2);
  CHECK(g.entities[0].lemma == "dog");
  CHECK(g.entities[1].lemma == "chair");
  REQUIRE(g.edges.size() == 1);
  CHECK(g.edges[0].predicate == "sitting on");
}

TEST_CASE("parse_caption: duplicate surface forms stay distinct entities") {
  auto g = parse_caption("a boy near a boy", test_rules());
  REQUIRE(g.entities.size() == 2);
  CHECK(g.entities[0].lemma == "boy");
  CHECK(g.entities[1].lemma == "boy");
  CHECK(g.entities[0].caption_span != g.entities[1].caption_span);
  REQUIRE(g.edges.size() == 1);
  CHECK(g.edges[0].predicate == "near");
}

TEST_CASE("parse_caption is deterministic") {
  const std::string caption = "a kid riding a skateboard near an old horse";
  auto g1 = parse_caption(caption, test_rules());
  auto g2 = parse_caption(caption, test_rules());
  REQUIRE(g1.entities.size() == g2.entities.size());
  for (std::size_t i = 0; i < g1.entities.size(); ++i) {
    CHECK(g1.entities[i].lemma == g2.entities[i].lemma);
    CHECK(g1.entities[i].caption_span == g2.entities[i].caption_span);
  }
  CHECK(g1.edges.size() == g2.edges.size());
  CHECK(g1.entities[0].lemma == "boy");  // synonym applied
}

TEST_CASE("synonym normalization is idempotent") {
  SynonymMatcher m({{"kid", "boy"}, {"child", "kid"}});  // chain resolves to boy
  CHECK(m.canonicalize("child") == "boy");
  CHECK(m.canonicalize(m.canonicalize("child")) == m.canonicalize("child"));
  CHECK(m.canonicalize("boy") == "boy");
  const std::map<std::string, std::string> cyclic{{"a", "b"}, {"b", "a"}};
  CHECK_THROWS_AS(SynonymMatcher{cyclic}, std::invalid_argument);
}

TEST_CASE("ingest_parsed_triplets validates and canonicalizes") {
  TempDir dir;
  {
    std::ofstream out(dir.file("graphs.jsonl"));
    out << R"({"image_id":"a","entities":[{"lemma":"Kid"},{"lemma":"skateboard"}],"edges":[[0,"riding",1]]})"
        << "\n";
  }
  const std::map<std::string, std::string> kid_to_boy{{"kid", "boy"}};
  SynonymMatcher syn(kid_to_boy);
  auto graphs = ingest_parsed_triplets(dir.file("graphs.jsonl"), syn);
  REQUIRE(graphs.size() == 1);
  CHECK(graphs[0].entities[0].lemma == "boy");

  {
    std::ofstream out(dir.file("bad_graphs.jsonl"));
    out << R"({"image_id":"a","entities":[{"lemma":"boy"}],"edges":[[0,"riding",9]]})" << "\n";
  }
  try {
    ingest_parsed_triplets(dir.file("bad_graphs.jsonl"), syn);
    FAIL("expected validation failure");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("index out of range") != std::string::npos);
  }
}

TEST_CASE("default rule file parses the running examples") {
  ParserRuleSet rules = ParserRuleSet::from_json_file(std::string(WSGG_TEST_DATA_DIR) +
                                                      "/../../data/default_rules.json");
  auto g = parse_caption("A young boy riding a skateboard", rules);
  REQUIRE(g.entities.size() == 2);
  CHECK(g.entities[0].lemma == "boy");
  REQUIRE(g.edges.size() == 1);
  CHECK(g.edges[0].predicate == "riding");
}

TEST_CASE("every parsed graph passes validate_graph on random captions") {
  ParserRuleSet rules = test_rules();
  const std::vector<std::string> words = {"a",       "boy",  "riding", "on",    "horse",
                                          "sky",     "dog",  "near",   "the",   "old",
                                          "chair",   "sitting", "holding", "man", "under",
                                          "skateboard"};
  Rng rng(7);
  for (int it = 0; it < 200; ++it) {
    std::string caption;
    const int len = 1 + rng.next_int(10);
    for (int w = 0; w < len; ++w) {
      caption += words[rng.next_int(static_cast<int>(words.size()))];
      caption += ' ';
    }
    auto g = parse_caption(caption, rules);
    CHECK(validate_graph(g).empty());
  }
}
