#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "tpcap/common.hpp"

namespace tpcap {

// Dense row-major matrix of doubles. All model math runs in double; weights
// are snapped to the float32 grid when they enter a checkpoint.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const {
    return data[static_cast<size_t>(r) * cols + c];
  }
  double* row_ptr(int r) { return data.data() + static_cast<size_t>(r) * cols; }
  const double* row_ptr(int r) const {
    return data.data() + static_cast<size_t>(r) * cols;
  }
  int64_t numel() const { return static_cast<int64_t>(rows) * cols; }
  bool same_shape(const Mat& o) const {
    return rows == o.rows && cols == o.cols;
  }
  bool all_finite() const;
  void fill(double v) { std::fill(data.begin(), data.end(), v); }
  void quantize_f32_inplace() {
    for (double& x : data) x = quantize_f32(x);
  }
};

// C = A * B
Mat matmul(const Mat& a, const Mat& b);
// C = A * B^T
Mat matmul_nt(const Mat& a, const Mat& b);
// C = A^T * B
Mat matmul_tn(const Mat& a, const Mat& b);
// C += A * B, etc. (used by autograd backward passes)
void matmul_acc(const Mat& a, const Mat& b, Mat& out);
void matmul_nt_acc(const Mat& a, const Mat& b, Mat& out);
void matmul_tn_acc(const Mat& a, const Mat& b, Mat& out);

void add_inplace(Mat& a, const Mat& b);
Mat operator+(const Mat& a, const Mat& b);
Mat operator-(const Mat& a, const Mat& b);
Mat operator*(const Mat& a, double s);

}  // namespace tpcap
