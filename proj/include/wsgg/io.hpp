#pragma once

#include <string>
#include <vector>

#include "wsgg/fusion.hpp"
#include "wsgg/grounder.hpp"
#include "wsgg/teachers.hpp"
#include "wsgg/types.hpp"

namespace wsgg::io {

// JSONL readers throw std::runtime_error naming the offending line number on
// malformed records. Writers emit one compact JSON object per line with
// sorted keys, so identical data produces identical bytes.

std::vector<ImageRecord> read_images_jsonl(const std::string& path);
void write_images_jsonl(const std::string& path, const std::vector<ImageRecord>& images);

std::vector<UnlocalizedSceneGraph> read_graphs_jsonl(const std::string& path);
void write_graphs_jsonl(const std::string& path, const std::vector<UnlocalizedSceneGraph>& graphs);

std::vector<CaptionRecord> read_captions_jsonl(const std::string& path);
void write_captions_jsonl(const std::string& path, const std::vector<CaptionRecord>& captions);

EntityEmbeddingTable read_embeddings_jsonl(const std::string& path);
void write_embeddings_jsonl(const std::string& path, const EntityEmbeddingTable& table);

// JSONL grids for small data; a raw little-endian float32 stream with a JSON
// sidecar header for bulk. read_activation_maps dispatches on the sidecar's
// "grids_file" key.
std::vector<ActivationMap> read_activation_maps(const std::string& path);
void write_activation_maps_jsonl(const std::string& path, const std::vector<ActivationMap>& maps);
void write_activation_maps_binary(const std::string& sidecar_path, const std::string& bin_path,
                                  const std::vector<ActivationMap>& maps);

ExpertCache read_expert_cache_jsonl(const std::string& path);
void write_expert_cache_jsonl(const std::string& path, const ExpertCache& cache);

std::vector<PseudoSceneGraph> read_pseudo_jsonl(const std::string& path);
void write_pseudo_jsonl(const std::string& path, const std::vector<PseudoSceneGraph>& graphs);

std::vector<SceneGraphPrediction> read_predictions_jsonl(const std::string& path);
void write_predictions_jsonl(const std::string& path,
                             const std::vector<SceneGraphPrediction>& predictions);

std::vector<ImageGroundTruth> read_gt_jsonl(const std::string& path);
void write_gt_jsonl(const std::string& path, const std::vector<ImageGroundTruth>& gt);

std::vector<AlignmentRecord> read_alignments_jsonl(const std::string& path);
void write_alignments_jsonl(const std::string& path, const std::vector<AlignmentRecord>& records);

LabelSpaces read_labels_json(const std::string& path);
void write_labels_json(const std::string& path, const LabelSpaces& labels);

// Self-describing grounder checkpoint: shapes, seed and all parameter
// arrays; the adaptor rides along when the self-guided strategy trained one.
void write_grounder_checkpoint(const std::string& path, const GrounderParams& params,
                               const AdaptorParams* adaptor);
GrounderParams read_grounder_checkpoint(const std::string& path, AdaptorParams* adaptor_out);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace wsgg::io
