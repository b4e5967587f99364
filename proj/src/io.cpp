#include "wsgg/io.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace wsgg::io {

using nlohmann::json;

namespace {

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  return out;
}

template <typename Fn>
void for_each_jsonl(const std::string& path, Fn fn) {
  std::ifstream in = open_in(path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                               ": malformed record: " + e.what());
    }
    try {
      fn(j);
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

json box_to_json(const Box& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

Box box_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw std::runtime_error("box must be [x1,y1,x2,y2]");
  return Box{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

json mat_to_json(const Mat& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows; ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols; ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Mat mat_from_json(const json& j, const char* what) {
  if (!j.is_array()) throw std::runtime_error(std::string(what) + " must be an array of rows");
  const int rows = static_cast<int>(j.size());
  if (rows == 0) return Mat();
  const int cols = static_cast<int>(j[0].size());
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    if (static_cast<int>(j[i].size()) != cols) {
      throw std::runtime_error(std::string(what) + ": ragged rows");
    }
    for (int c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
  }
  return m;
}

}  // namespace

std::vector<ImageRecord> read_images_jsonl(const std::string& path) {
  std::vector<ImageRecord> images;
  for_each_jsonl(path, [&](const json& j) {
    ImageRecord rec;
    rec.image_id = j.at("image_id").get<std::string>();
    rec.width = j.at("width").get<double>();
    rec.height = j.at("height").get<double>();
    for (const json& pj : j.at("proposals")) {
      RegionProposal p;
      p.box = box_from_json(pj.at("box"));
      p.label = pj.at("label").get<std::string>();
      p.score = pj.at("score").get<double>();
      p.feature = pj.at("feature").get<std::vector<double>>();
      rec.proposals.push_back(std::move(p));
    }
    images.push_back(std::move(rec));
  });
  return images;
}

void write_images_jsonl(const std::string& path, const std::vector<ImageRecord>& images) {
  std::ofstream out = open_out(path);
  for (const ImageRecord& rec : images) {
    json proposals = json::array();
    for (const RegionProposal& p : rec.proposals) {
      proposals.push_back({{"box", box_to_json(p.box)},
                           {"label", p.label},
                           {"score", p.score},
                           {"feature", p.feature}});
    }
    json j{{"image_id", rec.image_id},
           {"width", rec.width},
           {"height", rec.height},
           {"proposals", std::move(proposals)}};
    out << j.dump() << "\n";
  }
}

std::vector<UnlocalizedSceneGraph> read_graphs_jsonl(const std::string& path) {
  std::vector<UnlocalizedSceneGraph> graphs;
  for_each_jsonl(path, [&](const json& j) {
    UnlocalizedSceneGraph g;
    g.image_id = j.at("image_id").get<std::string>();
    int idx = 0;
    for (const json& ej : j.at("entities")) {
      TextEntity e;
      e.entity_id = idx;
      e.embedding_ref = idx;
      e.lemma = ej.at("lemma").get<std::string>();
      if (ej.contains("span")) {
        e.caption_span = std::make_pair(ej["span"][0].get<int>(), ej["span"][1].get<int>());
      }
      g.entities.push_back(std::move(e));
      ++idx;
    }
    for (const json& edge : j.at("edges")) {
      if (!edge.is_array() || edge.size() != 3) {
        throw std::runtime_error("edge must be [subject, predicate, object]");
      }
      g.edges.push_back({edge[0].get<int>(), edge[1].get<std::string>(), edge[2].get<int>()});
    }
    graphs.push_back(std::move(g));
  });
  return graphs;
}

void write_graphs_jsonl(const std::string& path, const std::vector<UnlocalizedSceneGraph>& graphs) {
  std::ofstream out = open_out(path);
  for (const UnlocalizedSceneGraph& g : graphs) {
    json entities = json::array();
    for (const TextEntity& e : g.entities) {
      json ej{{"lemma", e.lemma}};
      if (e.caption_span) ej["span"] = {e.caption_span->first, e.caption_span->second};
      entities.push_back(std::move(ej));
    }
    json edges = json::array();
    for (const GraphEdge& e : g.edges) edges.push_back({e.subject, e.predicate, e.object});
    json j{{"image_id", g.image_id}, {"entities", std::move(entities)}, {"edges", std::move(edges)}};
    out << j.dump() << "\n";
  }
}

std::vector<CaptionRecord> read_captions_jsonl(const std::string& path) {
  std::vector<CaptionRecord> captions;
  for_each_jsonl(path, [&](const json& j) {
    captions.push_back({j.at("image_id").get<std::string>(), j.at("caption").get<std::string>()});
  });
  return captions;
}

void write_captions_jsonl(const std::string& path, const std::vector<CaptionRecord>& captions) {
  std::ofstream out = open_out(path);
  for (const CaptionRecord& c : captions) {
    out << json{{"image_id", c.image_id}, {"caption", c.caption}}.dump() << "\n";
  }
}

EntityEmbeddingTable read_embeddings_jsonl(const std::string& path) {
  EntityEmbeddingTable table;
  for_each_jsonl(path, [&](const json& j) {
    const std::string image_id = j.at("image_id").get<std::string>();
    table.rows_by_image[image_id] = mat_from_json(j.at("entity_embeddings"), "entity_embeddings");
  });
  return table;
}

void write_embeddings_jsonl(const std::string& path, const EntityEmbeddingTable& table) {
  std::ofstream out = open_out(path);
  for (const auto& [image_id, rows] : table.rows_by_image) {
    out << json{{"image_id", image_id}, {"entity_embeddings", mat_to_json(rows)}}.dump() << "\n";
  }
}

namespace {

ActivationMap activation_map_from_header(const json& j) {
  ActivationMap m;
  m.image_id = j.at("image_id").get<std::string>();
  m.entity_id = j.at("entity_id").get<int>();
  m.grid_h = j.at("h").get<int>();
  m.grid_w = j.at("w").get<int>();
  m.scale_x = j.at("scale")[0].get<double>();
  m.scale_y = j.at("scale")[1].get<double>();
  return m;
}

json activation_map_header(const ActivationMap& m) {
  return json{{"image_id", m.image_id},
              {"entity_id", m.entity_id},
              {"h", m.grid_h},
              {"w", m.grid_w},
              {"scale", {m.scale_x, m.scale_y}}};
}

std::vector<ActivationMap> read_activation_maps_binary(const std::string& sidecar_path,
                                                       const json& sidecar) {
  const std::string bin_name = sidecar.at("grids_file").get<std::string>();
  const std::filesystem::path bin_path = std::filesystem::path(sidecar_path).parent_path() / bin_name;
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open grid stream '" + bin_path.string() + "'");

  std::vector<ActivationMap> maps;
  for (const json& rec : sidecar.at("records")) {
    ActivationMap m = activation_map_from_header(rec);
    const std::size_t n = static_cast<std::size_t>(m.grid_h) * m.grid_w;
    std::vector<float> raw(n);
    bin.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (static_cast<std::size_t>(bin.gcount()) != n * sizeof(float)) {
      throw std::runtime_error("grid stream truncated for image '" + m.image_id + "'");
    }
    m.grid.assign(raw.begin(), raw.end());
    maps.push_back(std::move(m));
  }
  return maps;
}

}  // namespace

std::vector<ActivationMap> read_activation_maps(const std::string& path) {
  // A sidecar header is a single JSON object naming its grid stream;
  // anything else is treated as JSONL with inline grids.
  {
    std::ifstream probe = open_in(path);
    std::string first_line;
    std::getline(probe, first_line);
    json j = json::parse(first_line, nullptr, false);
    if (j.is_object() && j.contains("grids_file")) {
      return read_activation_maps_binary(path, j);
    }
  }
  std::vector<ActivationMap> maps;
  for_each_jsonl(path, [&](const json& j) {
    ActivationMap m = activation_map_from_header(j);
    m.grid = j.at("grid").get<std::vector<double>>();
    auto violations = validate_activation_map(m);
    if (!violations.empty()) throw std::runtime_error("invalid activation map: " + violations.front());
    maps.push_back(std::move(m));
  });
  return maps;
}

void write_activation_maps_jsonl(const std::string& path, const std::vector<ActivationMap>& maps) {
  std::ofstream out = open_out(path);
  for (const ActivationMap& m : maps) {
    json j = activation_map_header(m);
    j["grid"] = m.grid;
    out << j.dump() << "\n";
  }
}

void write_activation_maps_binary(const std::string& sidecar_path, const std::string& bin_path,
                                  const std::vector<ActivationMap>& maps) {
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open '" + bin_path + "' for writing");
  json records = json::array();
  for (const ActivationMap& m : maps) {
    records.push_back(activation_map_header(m));
    std::vector<float> raw(m.grid.begin(), m.grid.end());
    bin.write(reinterpret_cast<const char*>(raw.data()),
              static_cast<std::streamsize>(raw.size() * sizeof(float)));
  }
  json sidecar{{"format", "wsgg-activations"},
               {"grids_file", std::filesystem::path(bin_path).filename().string()},
               {"records", std::move(records)}};
  std::ofstream out = open_out(sidecar_path);
  out << sidecar.dump() << "\n";
}

ExpertCache read_expert_cache_jsonl(const std::string& path) {
  ExpertCache cache;
  for_each_jsonl(path, [&](const json& j) {
    const std::string image_id = j.at("image_id").get<std::string>();
    ExpertEmbeddings e;
    e.proposal_embeddings = mat_from_json(j.at("proposal_embeddings"), "proposal_embeddings");
    e.entity_prompt_embeddings =
        mat_from_json(j.at("entity_prompt_embeddings"), "entity_prompt_embeddings");
    cache[image_id] = std::move(e);
  });
  return cache;
}

void write_expert_cache_jsonl(const std::string& path, const ExpertCache& cache) {
  std::ofstream out = open_out(path);
  for (const auto& [image_id, e] : cache) {
    out << json{{"image_id", image_id},
                {"proposal_embeddings", mat_to_json(e.proposal_embeddings)},
                {"entity_prompt_embeddings", mat_to_json(e.entity_prompt_embeddings)}}
               .dump()
        << "\n";
  }
}

std::vector<PseudoSceneGraph> read_pseudo_jsonl(const std::string& path) {
  std::vector<PseudoSceneGraph> graphs;
  for_each_jsonl(path, [&](const json& j) {
    PseudoSceneGraph g;
    g.image_id = j.at("image_id").get<std::string>();
    for (const json& ej : j.at("entities")) {
      GroundedEntity e;
      e.lemma = ej.at("lemma").get<std::string>();
      e.candidates = ej.at("candidates").get<std::vector<int>>();
      e.scores = ej.at("scores").get<std::vector<double>>();
      if (e.candidates.empty() || e.candidates.size() != e.scores.size()) {
        throw std::runtime_error("grounded entity needs matching non-empty candidates/scores");
      }
      g.grounded_entities.push_back(std::move(e));
    }
    for (const json& edge : j.at("edges")) {
      g.edges.push_back({edge[0].get<int>(), edge[1].get<std::string>(), edge[2].get<int>()});
    }
    graphs.push_back(std::move(g));
  });
  return graphs;
}

void write_pseudo_jsonl(const std::string& path, const std::vector<PseudoSceneGraph>& graphs) {
  std::ofstream out = open_out(path);
  for (const PseudoSceneGraph& g : graphs) {
    json entities = json::array();
    for (const GroundedEntity& e : g.grounded_entities) {
      entities.push_back({{"lemma", e.lemma}, {"candidates", e.candidates}, {"scores", e.scores}});
    }
    json edges = json::array();
    for (const GraphEdge& e : g.edges) edges.push_back({e.subject, e.predicate, e.object});
    out << json{{"image_id", g.image_id},
                {"entities", std::move(entities)},
                {"edges", std::move(edges)}}
               .dump()
        << "\n";
  }
}

std::vector<SceneGraphPrediction> read_predictions_jsonl(const std::string& path) {
  std::vector<SceneGraphPrediction> preds;
  for_each_jsonl(path, [&](const json& j) {
    SceneGraphPrediction p;
    p.image_id = j.at("image_id").get<std::string>();
    if (j.contains("detections")) {
      for (const json& dj : j["detections"]) {
        p.detections.push_back(
            {box_from_json(dj.at("box")), dj.at("label").get<std::string>(), dj.at("score").get<double>()});
      }
    }
    for (const json& tj : j.at("triplets")) {
      PredictedTriplet t;
      t.s_box = box_from_json(tj.at("s_box"));
      t.s_label = tj.at("s_label").get<std::string>();
      t.predicate = tj.at("predicate").get<std::string>();
      t.o_box = box_from_json(tj.at("o_box"));
      t.o_label = tj.at("o_label").get<std::string>();
      t.score = tj.at("score").get<double>();
      p.triplets.push_back(std::move(t));
    }
    preds.push_back(std::move(p));
  });
  return preds;
}

void write_predictions_jsonl(const std::string& path,
                             const std::vector<SceneGraphPrediction>& predictions) {
  std::ofstream out = open_out(path);
  for (const SceneGraphPrediction& p : predictions) {
    json detections = json::array();
    for (const Detection& d : p.detections) {
      detections.push_back({{"box", box_to_json(d.box)}, {"label", d.label}, {"score", d.score}});
    }
    json triplets = json::array();
    for (const PredictedTriplet& t : p.triplets) {
      triplets.push_back({{"s_box", box_to_json(t.s_box)},
                          {"s_label", t.s_label},
                          {"predicate", t.predicate},
                          {"o_box", box_to_json(t.o_box)},
                          {"o_label", t.o_label},
                          {"score", t.score}});
    }
    out << json{{"image_id", p.image_id},
                {"detections", std::move(detections)},
                {"triplets", std::move(triplets)}}
               .dump()
        << "\n";
  }
}

std::vector<ImageGroundTruth> read_gt_jsonl(const std::string& path) {
  std::vector<ImageGroundTruth> gt;
  for_each_jsonl(path, [&](const json& j) {
    ImageGroundTruth g;
    g.image_id = j.at("image_id").get<std::string>();
    for (const json& tj : j.at("triplets")) {
      GtTriplet t;
      t.s_box = box_from_json(tj.at("s_box"));
      t.s_label = tj.at("s_label").get<std::string>();
      t.predicate = tj.at("predicate").get<std::string>();
      t.o_box = box_from_json(tj.at("o_box"));
      t.o_label = tj.at("o_label").get<std::string>();
      g.triplets.push_back(std::move(t));
    }
    if (j.contains("objects")) {
      for (const json& oj : j["objects"]) {
        g.objects.push_back({box_from_json(oj.at("box")), oj.at("label").get<std::string>()});
      }
    }
    gt.push_back(std::move(g));
  });
  return gt;
}

void write_gt_jsonl(const std::string& path, const std::vector<ImageGroundTruth>& gt) {
  std::ofstream out = open_out(path);
  for (const ImageGroundTruth& g : gt) {
    json triplets = json::array();
    for (const GtTriplet& t : g.triplets) {
      triplets.push_back({{"s_box", box_to_json(t.s_box)},
                          {"s_label", t.s_label},
                          {"predicate", t.predicate},
                          {"o_box", box_to_json(t.o_box)},
                          {"o_label", t.o_label}});
    }
    json objects = json::array();
    for (const GtObject& o : g.objects) {
      objects.push_back({{"box", box_to_json(o.box)}, {"label", o.label}});
    }
    out << json{{"image_id", g.image_id},
                {"triplets", std::move(triplets)},
                {"objects", std::move(objects)}}
               .dump()
        << "\n";
  }
}

std::vector<AlignmentRecord> read_alignments_jsonl(const std::string& path) {
  std::vector<AlignmentRecord> records;
  for_each_jsonl(path, [&](const json& j) {
    records.push_back(
        {j.at("image_id").get<std::string>(), j.at("gold").get<std::vector<int>>()});
  });
  return records;
}

void write_alignments_jsonl(const std::string& path, const std::vector<AlignmentRecord>& records) {
  std::ofstream out = open_out(path);
  for (const AlignmentRecord& r : records) {
    out << json{{"image_id", r.image_id}, {"gold", r.gold}}.dump() << "\n";
  }
}

LabelSpaces read_labels_json(const std::string& path) {
  std::ifstream in = open_in(path);
  json j;
  in >> j;
  LabelSpaces labels;
  labels.objects = j.at("objects").get<std::vector<std::string>>();
  labels.predicates = j.at("predicates").get<std::vector<std::string>>();
  return labels;
}

void write_labels_json(const std::string& path, const LabelSpaces& labels) {
  std::ofstream out = open_out(path);
  out << json{{"objects", labels.objects}, {"predicates", labels.predicates}}.dump() << "\n";
}

void write_grounder_checkpoint(const std::string& path, const GrounderParams& params,
                               const AdaptorParams* adaptor) {
  auto& p = const_cast<GrounderParams&>(params);
  json arrays = json::object();
  arrays["text.w1"] = {{"shape", {p.text.l1.w.rows, p.text.l1.w.cols}}, {"data", p.text.l1.w.data}};
  arrays["text.b1"] = {{"shape", {static_cast<int>(p.text.l1.b.size())}}, {"data", p.text.l1.b}};
  arrays["text.w2"] = {{"shape", {p.text.l2.w.rows, p.text.l2.w.cols}}, {"data", p.text.l2.w.data}};
  arrays["text.b2"] = {{"shape", {static_cast<int>(p.text.l2.b.size())}}, {"data", p.text.l2.b}};
  arrays["visual.w1"] = {{"shape", {p.visual.l1.w.rows, p.visual.l1.w.cols}},
                         {"data", p.visual.l1.w.data}};
  arrays["visual.b1"] = {{"shape", {static_cast<int>(p.visual.l1.b.size())}}, {"data", p.visual.l1.b}};
  arrays["visual.w2"] = {{"shape", {p.visual.l2.w.rows, p.visual.l2.w.cols}},
                         {"data", p.visual.l2.w.data}};
  arrays["visual.b2"] = {{"shape", {static_cast<int>(p.visual.l2.b.size())}}, {"data", p.visual.l2.b}};
  arrays["head.w"] = {{"shape", {static_cast<int>(p.head.w.size())}}, {"data", p.head.w}};
  arrays["head.b"] = {{"shape", {1}}, {"data", {p.head.b}}};

  json j{{"format", "wsgg-grounder"},
         {"version", 1},
         {"seed", params.seed},
         {"dims",
          {{"d_e", params.dims.d_e},
           {"d_v", params.dims.d_v},
           {"d_h", params.dims.d_h},
           {"d", params.dims.d}}},
         {"params", std::move(arrays)}};
  if (adaptor) {
    j["adaptor"] = {{"w", adaptor->w}, {"b", adaptor->b}};
  }
  std::ofstream out = open_out(path);
  out << j.dump() << "\n";
}

GrounderParams read_grounder_checkpoint(const std::string& path, AdaptorParams* adaptor_out) {
  std::ifstream in = open_in(path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error(path + ": malformed checkpoint: " + e.what());
  }
  if (j.value("format", "") != "wsgg-grounder") {
    throw std::runtime_error(path + ": not a grounder checkpoint");
  }
  GrounderDims dims{j["dims"]["d_e"].get<int>(), j["dims"]["d_v"].get<int>(),
                    j["dims"]["d_h"].get<int>(), j["dims"]["d"].get<int>()};
  GrounderParams p = GrounderParams::init(dims, j["seed"].get<std::uint64_t>());

  const json& arrays = j.at("params");
  auto load = [&arrays](const char* name, double* dst, std::size_t n) {
    const json& a = arrays.at(name);
    const auto data = a.at("data").get<std::vector<double>>();
    if (data.size() != n) {
      throw std::runtime_error(std::string("checkpoint array '") + name + "' has wrong size");
    }
    std::memcpy(dst, data.data(), n * sizeof(double));
  };
  for (ParamView& v : param_views(p)) load(v.name.c_str(), v.data, v.n);

  if (adaptor_out) {
    if (j.contains("adaptor")) {
      adaptor_out->w = j["adaptor"]["w"].get<std::vector<double>>();
      adaptor_out->b = j["adaptor"]["b"].get<double>();
    } else {
      *adaptor_out = AdaptorParams{};
    }
  }
  return p;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in = open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out = open_out(path);
  out << content;
}

}  // namespace wsgg::io
