#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "wsgg/mat.hpp"
#include "wsgg/types.hpp"

namespace wsgg {

// Stacks the proposal feature vectors of one image into an N_v x D_v matrix.
Mat proposal_features(const ImageRecord& image);

// y = x * w + b
struct DenseLayer {
  Mat w;
  std::vector<double> b;
};

// Two dense layers with a rectifier between them, none after the second.
struct Mlp2 {
  DenseLayer l1, l2;
};

// Affine map from a d-vector to a scalar similarity score.
struct SimilarityHead {
  std::vector<double> w;
  double b = 0.0;
};

struct GrounderDims {
  int d_e = 0;     // entity embedding width
  int d_v = 0;     // proposal feature width
  int d_h = 512;   // encoder hidden width
  int d = 512;     // shared output embedding width
};

// Learnable weights of the student grounder. The same struct doubles as the
// gradient container; zeros_like gives a shape-matched zero copy.
struct GrounderParams {
  GrounderDims dims;
  std::uint64_t seed = 0;
  Mlp2 text;
  Mlp2 visual;
  SimilarityHead head;

  // Uniform fan-in initialization, biases zero. Draw order is fixed:
  // text.w1, text.w2, visual.w1, visual.w2, head.w.
  static GrounderParams init(const GrounderDims& dims, std::uint64_t seed);
  static GrounderParams zeros_like(const GrounderParams& other);
};

struct ParamView {
  std::string name;
  double* data = nullptr;
  std::size_t n = 0;
};

std::vector<ParamView> param_views(GrounderParams& p);
std::size_t param_count(const GrounderParams& p);

struct MlpCache {
  Mat z1;  // pre-activation of layer 1
  Mat a1;  // rectified activations
};

Mat mlp2_forward(const Mat& x, const Mlp2& m, MlpCache* cache = nullptr);

// Accumulates parameter gradients into `grad` and, when grad_x is non-null,
// input gradients into *grad_x (which must already have x's shape).
void mlp2_backward(const Mat& x, const Mlp2& m, const MlpCache& cache, const Mat& grad_out,
                   Mlp2& grad, Mat* grad_x = nullptr);

// Row i of the result embeds entity i.
Mat encode_text(const Mat& embeddings, const GrounderParams& p, MlpCache* cache = nullptr);
// Row j of the result embeds proposal j.
Mat encode_visual(const Mat& features, const GrounderParams& p, MlpCache* cache = nullptr);

// a[i][j] = head(h_i ⊙ v_j); permuting proposals permutes columns identically.
Mat similarity_matrix(const Mat& h, const Mat& v, const GrounderParams& p);

// Accumulates gradients of a scalar loss through the similarity head given
// grad_a = dLoss/dA. grad_h / grad_v must be shape-matched and may already
// hold contributions from other terms.
void similarity_backward(const Mat& h, const Mat& v, const GrounderParams& p, const Mat& grad_a,
                         Mat& grad_h, Mat& grad_v, SimilarityHead& grad_head);

// Contextual entity embeddings, one row table per image. The upstream
// contextual encoder is a provider; rows are ingested or synthesized.
struct EntityEmbeddingTable {
  std::map<std::string, Mat> rows_by_image;
  std::string provider = "precomputed";  // or "synthetic"

  const Mat& require(const std::string& image_id) const;
};

}  // namespace wsgg
