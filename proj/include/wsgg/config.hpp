#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "wsgg/sgg.hpp"
#include "wsgg/synth.hpp"
#include "wsgg/training.hpp"

namespace wsgg {

// Single config document with per-stage sections and one root seed; CLI
// flags override file values via dotted key paths.
struct PipelineConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "out";

  struct Data {
    std::string images, graphs, captions, rules, embeddings, activations, expert_cache,
        alignments, labels, eval_images, eval_gt;
    bool has_synth = false;
    SynthSpec synth;
    int synth_test_images = 8;
  } data;

  TrainConfig training;
  SggConfig sgg;

  struct Eval {
    std::vector<int> recall_ks{20, 50, 100};
    double iou_threshold = 0.5;
  } eval;

  static PipelineConfig from_json(const nlohmann::json& j);
  static PipelineConfig from_file(const std::string& path,
                                  const std::vector<std::string>& overrides = {});

  // Key echoed into the report so runs are self-describing.
  nlohmann::json echo() const;
};

// "a.b.c=value" applied onto the JSON document; values parse as JSON when
// possible and fall back to strings.
void apply_override(nlohmann::json& j, const std::string& assignment);

// Relative data paths resolve under $WSGG_DATA_DIR when it is set.
std::string resolve_data_path(const std::string& path);

}  // namespace wsgg
