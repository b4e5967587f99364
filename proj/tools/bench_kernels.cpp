// Times the OpenMP kernels against the serial reference and checks the two
// produce identical bytes. Build with -DNDEBUG for honest numbers.
#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>

#include <omp.h>

#include "wsgg/grounder.hpp"
#include "wsgg/kernels.hpp"
#include "wsgg/rng.hpp"

using namespace wsgg;

namespace {

Mat random_mat(int r, int c, Rng& rng) {
  Mat m(r, c);
  for (double& v : m.data) v = rng.normal();
  return m;
}

double time_ms(int reps, const std::function<void()>& fn) {
  fn();  // warm up
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto stop = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(stop - start).count() / reps;
}

bool bitwise_equal(const Mat& a, const Mat& b) {
  return a.same_shape(b) &&
         std::memcmp(a.data.data(), b.data.data(), a.size() * sizeof(double)) == 0;
}

struct Row {
  std::string name;
  double serial_ms;
  double omp_ms;
  bool exact;
};

void print_row(const Row& r) {
  std::printf("%-28s %10.3f %10.3f %8.2fx  %s\n", r.name.c_str(), r.serial_ms, r.omp_ms,
              r.serial_ms / r.omp_ms, r.exact ? "bitwise-equal" : "MISMATCH");
}

}  // namespace

int main() {
  Rng rng(7);
  std::printf("threads: %d\n", omp_get_max_threads());
  std::printf("%-28s %10s %10s %9s\n", "kernel", "serial ms", "omp ms", "speedup");

  {
    const int n = 384;
    Mat a = random_mat(n, n, rng), b = random_mat(n, n, rng);
    Mat c_ser, c_omp;
    Row row{"matmul_nn 384x384x384",
            time_ms(5, [&] { kernels::serial::matmul_nn(a, b, c_ser); }),
            time_ms(5, [&] { kernels::matmul_nn(a, b, c_omp); }), false};
    row.exact = bitwise_equal(c_ser, c_omp);
    print_row(row);
  }
  {
    const int n = 384;
    Mat a = random_mat(n, n, rng), b = random_mat(n, n, rng);
    Mat c_ser, c_omp;
    Row row{"matmul_nt 384x384x384",
            time_ms(5, [&] { kernels::serial::matmul_nt(a, b, c_ser); }),
            time_ms(5, [&] { kernels::matmul_nt(a, b, c_omp); }), false};
    row.exact = bitwise_equal(c_ser, c_omp);
    print_row(row);
  }
  {
    Mat x = random_mat(2048, 512, rng);
    Mat p_ser, p_omp;
    Row row{"softmax_rows 2048x512",
            time_ms(10, [&] { kernels::serial::softmax_rows(x, p_ser); }),
            time_ms(10, [&] { kernels::softmax_rows(x, p_omp); }), false};
    row.exact = bitwise_equal(p_ser, p_omp);
    print_row(row);
  }
  {
    // Full encoder forward at the paper-scale feature width.
    GrounderDims dims{768, 1536, 512, 512};
    GrounderParams params = GrounderParams::init(dims, 1);
    Mat features = random_mat(256, dims.d_v, rng);
    Mat out;
    const double omp_ms = time_ms(3, [&] { out = encode_visual(features, params); });
    std::printf("%-28s %10s %10.3f\n", "encode_visual 256x1536", "-", omp_ms);
  }
  return 0;
}
