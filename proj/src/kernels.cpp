#include "wsgg/kernels.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace wsgg::kernels {

namespace {

// Below this many output elements the parallel loops run serially; the
// pipeline spends most of its time on matrices far too small to amortize a
// fork-join.
constexpr long kParallelCutoff = 4096;

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("kernel dimension mismatch: " + what);
}

}  // namespace

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

namespace serial {

void matmul_nn(const Mat& a, const Mat& b, Mat& out) {
  require(a.cols == b.rows, "matmul_nn");
  out = Mat(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    for (int j = 0; j < b.cols; ++j) {
      double acc = 0.0;
      for (int k = 0; k < a.cols; ++k) acc += a(i, k) * b(k, j);
      out(i, j) = acc;
    }
  }
}

void matmul_nt(const Mat& a, const Mat& b, Mat& out) {
  require(a.cols == b.cols, "matmul_nt");
  out = Mat(a.rows, b.rows);
  for (int i = 0; i < a.rows; ++i) {
    for (int j = 0; j < b.rows; ++j) {
      double acc = 0.0;
      for (int k = 0; k < a.cols; ++k) acc += a(i, k) * b(j, k);
      out(i, j) = acc;
    }
  }
}

void matmul_tn(const Mat& a, const Mat& b, Mat& out) {
  require(a.rows == b.rows, "matmul_tn");
  out = Mat(a.cols, b.cols);
  for (int i = 0; i < a.cols; ++i) {
    for (int j = 0; j < b.cols; ++j) {
      double acc = 0.0;
      for (int k = 0; k < a.rows; ++k) acc += a(k, i) * b(k, j);
      out(i, j) = acc;
    }
  }
}

void add_row_bias(Mat& x, std::span<const double> bias) {
  require(static_cast<std::size_t>(x.cols) == bias.size(), "add_row_bias");
  for (int i = 0; i < x.rows; ++i) {
    double* r = x.row(i);
    for (int j = 0; j < x.cols; ++j) r[j] += bias[j];
  }
}

void relu(const Mat& x, Mat& out) {
  out = Mat(x.rows, x.cols);
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
}

void relu_backward(const Mat& pre, const Mat& grad_out, Mat& grad_pre) {
  require(pre.same_shape(grad_out), "relu_backward");
  grad_pre = Mat(pre.rows, pre.cols);
  for (std::size_t i = 0; i < pre.size(); ++i) {
    grad_pre.data[i] = pre.data[i] > 0.0 ? grad_out.data[i] : 0.0;
  }
}

void softmax_rows(const Mat& x, Mat& out) {
  out = Mat(x.rows, x.cols);
  for (int i = 0; i < x.rows; ++i) {
    const double* r = x.row(i);
    double mx = r[0];
    for (int j = 1; j < x.cols; ++j) mx = std::max(mx, r[j]);
    double sum = 0.0;
    double* o = out.row(i);
    for (int j = 0; j < x.cols; ++j) {
      o[j] = std::exp(r[j] - mx);
      sum += o[j];
    }
    for (int j = 0; j < x.cols; ++j) o[j] /= sum;
  }
}

void scale_cols(const Mat& x, std::span<const double> w, Mat& out) {
  require(static_cast<std::size_t>(x.cols) == w.size(), "scale_cols");
  out = Mat(x.rows, x.cols);
  for (int i = 0; i < x.rows; ++i) {
    const double* r = x.row(i);
    double* o = out.row(i);
    for (int j = 0; j < x.cols; ++j) o[j] = r[j] * w[j];
  }
}

void col_sums(const Mat& x, std::span<double> out) {
  require(static_cast<std::size_t>(x.cols) == out.size(), "col_sums");
  for (int j = 0; j < x.cols; ++j) out[j] = 0.0;
  for (int i = 0; i < x.rows; ++i) {
    const double* r = x.row(i);
    for (int j = 0; j < x.cols; ++j) out[j] += r[j];
  }
}

}  // namespace serial

void matmul_nn(const Mat& a, const Mat& b, Mat& out) {
  require(a.cols == b.rows, "matmul_nn");
  out = Mat(a.rows, b.cols);
  const long work = static_cast<long>(a.rows) * b.cols;
#pragma omp parallel for if (work > kParallelCutoff)
  for (int i = 0; i < a.rows; ++i) {
    for (int j = 0; j < b.cols; ++j) {
      double acc = 0.0;
      for (int k = 0; k < a.cols; ++k) acc += a(i, k) * b(k, j);
      out(i, j) = acc;
    }
  }
}

void matmul_nt(const Mat& a, const Mat& b, Mat& out) {
  require(a.cols == b.cols, "matmul_nt");
  out = Mat(a.rows, b.rows);
  const long work = static_cast<long>(a.rows) * b.rows;
#pragma omp parallel for if (work > kParallelCutoff)
  for (int i = 0; i < a.rows; ++i) {
    for (int j = 0; j < b.rows; ++j) {
      double acc = 0.0;
      for (int k = 0; k < a.cols; ++k) acc += a(i, k) * b(j, k);
      out(i, j) = acc;
    }
  }
}

void matmul_tn(const Mat& a, const Mat& b, Mat& out) {
  require(a.rows == b.rows, "matmul_tn");
  out = Mat(a.cols, b.cols);
  const long work = static_cast<long>(a.cols) * b.cols;
#pragma omp parallel for if (work > kParallelCutoff)
  for (int i = 0; i < a.cols; ++i) {
    for (int j = 0; j < b.cols; ++j) {
      double acc = 0.0;
      for (int k = 0; k < a.rows; ++k) acc += a(k, i) * b(k, j);
      out(i, j) = acc;
    }
  }
}

void add_row_bias(Mat& x, std::span<const double> bias) {
  require(static_cast<std::size_t>(x.cols) == bias.size(), "add_row_bias");
  const double* b = bias.data();
#pragma omp parallel for if (x.size() > static_cast<std::size_t>(kParallelCutoff))
  for (int i = 0; i < x.rows; ++i) {
    double* r = x.row(i);
    for (int j = 0; j < x.cols; ++j) r[j] += b[j];
  }
}

void relu(const Mat& x, Mat& out) {
  out = Mat(x.rows, x.cols);
  const long n = static_cast<long>(x.size());
#pragma omp parallel for if (n > kParallelCutoff)
  for (long i = 0; i < n; ++i) out.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
}

void relu_backward(const Mat& pre, const Mat& grad_out, Mat& grad_pre) {
  require(pre.same_shape(grad_out), "relu_backward");
  grad_pre = Mat(pre.rows, pre.cols);
  const long n = static_cast<long>(pre.size());
#pragma omp parallel for if (n > kParallelCutoff)
  for (long i = 0; i < n; ++i) {
    grad_pre.data[i] = pre.data[i] > 0.0 ? grad_out.data[i] : 0.0;
  }
}

void softmax_rows(const Mat& x, Mat& out) {
  out = Mat(x.rows, x.cols);
#pragma omp parallel for if (x.size() > static_cast<std::size_t>(kParallelCutoff))
  for (int i = 0; i < x.rows; ++i) {
    const double* r = x.row(i);
    double mx = r[0];
    for (int j = 1; j < x.cols; ++j) mx = std::max(mx, r[j]);
    double sum = 0.0;
    double* o = out.row(i);
    for (int j = 0; j < x.cols; ++j) {
      o[j] = std::exp(r[j] - mx);
      sum += o[j];
    }
    for (int j = 0; j < x.cols; ++j) o[j] /= sum;
  }
}

void scale_cols(const Mat& x, std::span<const double> w, Mat& out) {
  require(static_cast<std::size_t>(x.cols) == w.size(), "scale_cols");
  out = Mat(x.rows, x.cols);
  const double* wp = w.data();
#pragma omp parallel for if (x.size() > static_cast<std::size_t>(kParallelCutoff))
  for (int i = 0; i < x.rows; ++i) {
    const double* r = x.row(i);
    double* o = out.row(i);
    for (int j = 0; j < x.cols; ++j) o[j] = r[j] * wp[j];
  }
}

void col_sums(const Mat& x, std::span<double> out) {
  require(static_cast<std::size_t>(x.cols) == out.size(), "col_sums");
  double* op = out.data();
  // One thread per column; each column sum runs top to bottom as in serial.
#pragma omp parallel for if (x.size() > static_cast<std::size_t>(kParallelCutoff))
  for (int j = 0; j < x.cols; ++j) {
    double acc = 0.0;
    for (int i = 0; i < x.rows; ++i) acc += x(i, j);
    op[j] = acc;
  }
}

}  // namespace wsgg::kernels
