#include "wsgg/grounder.hpp"

#include <cmath>
#include <stdexcept>

#include "wsgg/kernels.hpp"
#include "wsgg/rng.hpp"

namespace wsgg {

namespace {

Mat uniform_fan_in(int rows, int cols, Rng& rng) {
  Mat m(rows, cols);
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  for (double& v : m.data) v = (2.0 * rng.next_double() - 1.0) * bound;
  return m;
}

void check_input(const Mat& x, int expected_cols, const char* what) {
  if (x.rows < 1 || x.cols != expected_cols) {
    throw std::invalid_argument(std::string(what) + ": expected N x " +
                                std::to_string(expected_cols) + " input, got " +
                                std::to_string(x.rows) + " x " + std::to_string(x.cols));
  }
}

}  // namespace

Mat proposal_features(const ImageRecord& image) {
  const int n = image.num_proposals();
  const int d = n > 0 ? static_cast<int>(image.proposals[0].feature.size()) : 0;
  Mat x(n, d);
  for (int j = 0; j < n; ++j) {
    if (static_cast<int>(image.proposals[j].feature.size()) != d) {
      throw std::runtime_error("image '" + image.image_id + "': inconsistent feature widths");
    }
    for (int k = 0; k < d; ++k) x(j, k) = image.proposals[j].feature[k];
  }
  return x;
}

GrounderParams GrounderParams::init(const GrounderDims& dims, std::uint64_t seed) {
  if (dims.d_e < 1 || dims.d_v < 1 || dims.d_h < 1 || dims.d < 1) {
    throw std::invalid_argument("GrounderParams::init: all dims must be positive");
  }
  Rng rng(substream_seed(seed, "grounder-init"));
  GrounderParams p;
  p.dims = dims;
  p.seed = seed;
  p.text.l1 = {uniform_fan_in(dims.d_e, dims.d_h, rng), std::vector<double>(dims.d_h, 0.0)};
  p.text.l2 = {uniform_fan_in(dims.d_h, dims.d, rng), std::vector<double>(dims.d, 0.0)};
  p.visual.l1 = {uniform_fan_in(dims.d_v, dims.d_h, rng), std::vector<double>(dims.d_h, 0.0)};
  p.visual.l2 = {uniform_fan_in(dims.d_h, dims.d, rng), std::vector<double>(dims.d, 0.0)};
  Mat head_w = uniform_fan_in(dims.d, 1, rng);
  p.head.w = head_w.data;
  p.head.b = 0.0;
  return p;
}

GrounderParams GrounderParams::zeros_like(const GrounderParams& other) {
  GrounderParams z = other;
  z.text.l1.w.fill(0.0);
  z.text.l2.w.fill(0.0);
  z.visual.l1.w.fill(0.0);
  z.visual.l2.w.fill(0.0);
  std::fill(z.text.l1.b.begin(), z.text.l1.b.end(), 0.0);
  std::fill(z.text.l2.b.begin(), z.text.l2.b.end(), 0.0);
  std::fill(z.visual.l1.b.begin(), z.visual.l1.b.end(), 0.0);
  std::fill(z.visual.l2.b.begin(), z.visual.l2.b.end(), 0.0);
  std::fill(z.head.w.begin(), z.head.w.end(), 0.0);
  z.head.b = 0.0;
  return z;
}

std::vector<ParamView> param_views(GrounderParams& p) {
  std::vector<ParamView> views;
  auto add = [&views](const std::string& name, std::vector<double>& v) {
    views.push_back({name, v.data(), v.size()});
  };
  add("text.w1", p.text.l1.w.data);
  add("text.b1", p.text.l1.b);
  add("text.w2", p.text.l2.w.data);
  add("text.b2", p.text.l2.b);
  add("visual.w1", p.visual.l1.w.data);
  add("visual.b1", p.visual.l1.b);
  add("visual.w2", p.visual.l2.w.data);
  add("visual.b2", p.visual.l2.b);
  add("head.w", p.head.w);
  views.push_back({"head.b", &p.head.b, 1});
  return views;
}

std::size_t param_count(const GrounderParams& p) {
  auto& q = const_cast<GrounderParams&>(p);
  std::size_t total = 0;
  for (const ParamView& v : param_views(q)) total += v.n;
  return total;
}

Mat mlp2_forward(const Mat& x, const Mlp2& m, MlpCache* cache) {
  Mat z1;
  kernels::matmul_nn(x, m.l1.w, z1);
  kernels::add_row_bias(z1, m.l1.b);
  Mat a1;
  kernels::relu(z1, a1);
  Mat out;
  kernels::matmul_nn(a1, m.l2.w, out);
  kernels::add_row_bias(out, m.l2.b);
  if (cache) {
    cache->z1 = std::move(z1);
    cache->a1 = std::move(a1);
  }
  return out;
}

void mlp2_backward(const Mat& x, const Mlp2& m, const MlpCache& cache, const Mat& grad_out,
                   Mlp2& grad, Mat* grad_x) {
  // Layer 2.
  Mat dw2;
  kernels::matmul_tn(cache.a1, grad_out, dw2);
  for (std::size_t i = 0; i < dw2.size(); ++i) grad.l2.w.data[i] += dw2.data[i];
  std::vector<double> db2(grad_out.cols);
  kernels::col_sums(grad_out, db2);
  for (int j = 0; j < grad_out.cols; ++j) grad.l2.b[j] += db2[j];

  // Through the rectifier.
  Mat da1;
  kernels::matmul_nt(grad_out, m.l2.w, da1);
  Mat dz1;
  kernels::relu_backward(cache.z1, da1, dz1);

  // Layer 1.
  Mat dw1;
  kernels::matmul_tn(x, dz1, dw1);
  for (std::size_t i = 0; i < dw1.size(); ++i) grad.l1.w.data[i] += dw1.data[i];
  std::vector<double> db1(dz1.cols);
  kernels::col_sums(dz1, db1);
  for (int j = 0; j < dz1.cols; ++j) grad.l1.b[j] += db1[j];

  if (grad_x) {
    Mat dx;
    kernels::matmul_nt(dz1, m.l1.w, dx);
    for (std::size_t i = 0; i < dx.size(); ++i) grad_x->data[i] += dx.data[i];
  }
}

Mat encode_text(const Mat& embeddings, const GrounderParams& p, MlpCache* cache) {
  check_input(embeddings, p.dims.d_e, "encode_text");
  if (!all_finite(embeddings)) throw std::invalid_argument("encode_text: non-finite input");
  return mlp2_forward(embeddings, p.text, cache);
}

Mat encode_visual(const Mat& features, const GrounderParams& p, MlpCache* cache) {
  check_input(features, p.dims.d_v, "encode_visual");
  if (!all_finite(features)) throw std::invalid_argument("encode_visual: non-finite input");
  return mlp2_forward(features, p.visual, cache);
}

Mat similarity_matrix(const Mat& h, const Mat& v, const GrounderParams& p) {
  if (h.cols != v.cols || h.cols != p.dims.d) {
    throw std::invalid_argument("similarity_matrix: inner dimension mismatch");
  }
  // a[i][j] = sum_k w[k] h[i][k] v[j][k] + b  ==  (H diag(w)) V^T + b
  Mat hw;
  kernels::scale_cols(h, p.head.w, hw);
  Mat a;
  kernels::matmul_nt(hw, v, a);
  for (double& x : a.data) x += p.head.b;
  return a;
}

void similarity_backward(const Mat& h, const Mat& v, const GrounderParams& p, const Mat& grad_a,
                         Mat& grad_h, Mat& grad_v, SimilarityHead& grad_head) {
  if (grad_a.rows != h.rows || grad_a.cols != v.rows) {
    throw std::invalid_argument("similarity_backward: grad shape mismatch");
  }
  Mat ga_v;  // (dA · V)[i][k]
  kernels::matmul_nn(grad_a, v, ga_v);
  Mat ga_h;  // (dAᵀ · H)[j][k]
  kernels::matmul_tn(grad_a, h, ga_h);

  for (int i = 0; i < h.rows; ++i) {
    for (int k = 0; k < h.cols; ++k) {
      grad_h(i, k) += p.head.w[k] * ga_v(i, k);
    }
  }
  for (int j = 0; j < v.rows; ++j) {
    for (int k = 0; k < v.cols; ++k) {
      grad_v(j, k) += p.head.w[k] * ga_h(j, k);
    }
  }
  for (int k = 0; k < h.cols; ++k) {
    double acc = 0.0;
    for (int i = 0; i < h.rows; ++i) acc += h(i, k) * ga_v(i, k);
    grad_head.w[k] += acc;
  }
  double db = 0.0;
  for (double x : grad_a.data) db += x;
  grad_head.b += db;
}

const Mat& EntityEmbeddingTable::require(const std::string& image_id) const {
  auto it = rows_by_image.find(image_id);
  if (it == rows_by_image.end()) {
    throw std::runtime_error("missing entity embeddings for image '" + image_id + "'");
  }
  return it->second;
}

}  // namespace wsgg
