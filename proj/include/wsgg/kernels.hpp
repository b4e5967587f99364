#pragma once

#include <span>

#include "wsgg/mat.hpp"

namespace wsgg::kernels {

// Serial reference implementations. Kept for testing and benchmarking; the
// OpenMP variants below must produce bitwise-identical output.
namespace serial {

void matmul_nn(const Mat& a, const Mat& b, Mat& out);  // out = a * b
void matmul_nt(const Mat& a, const Mat& b, Mat& out);  // out = a * b^T
void matmul_tn(const Mat& a, const Mat& b, Mat& out);  // out = a^T * b
void add_row_bias(Mat& x, std::span<const double> bias);
void relu(const Mat& x, Mat& out);
// grad_pre = grad_out where pre > 0, else 0.
void relu_backward(const Mat& pre, const Mat& grad_out, Mat& grad_pre);
void softmax_rows(const Mat& x, Mat& out);
// out[i][k] = x[i][k] * w[k]
void scale_cols(const Mat& x, std::span<const double> w, Mat& out);
void col_sums(const Mat& x, std::span<double> out);

}  // namespace serial

// OpenMP implementations. Each output element is owned by one thread and
// accumulated in the same order as the serial reference, so results do not
// depend on the thread count or schedule.
void matmul_nn(const Mat& a, const Mat& b, Mat& out);
void matmul_nt(const Mat& a, const Mat& b, Mat& out);
void matmul_tn(const Mat& a, const Mat& b, Mat& out);
void add_row_bias(Mat& x, std::span<const double> bias);
void relu(const Mat& x, Mat& out);
void relu_backward(const Mat& pre, const Mat& grad_out, Mat& grad_pre);
void softmax_rows(const Mat& x, Mat& out);
void scale_cols(const Mat& x, std::span<const double> w, Mat& out);
void col_sums(const Mat& x, std::span<double> out);

// Numerically stable logistic function; saturates cleanly for large |x|.
double sigmoid(double x);

}  // namespace wsgg::kernels
