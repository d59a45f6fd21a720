#include "tpcap/tensor.hpp"

#include <cmath>
#include <cstdio>

namespace tpcap {

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(v));
  return std::string(buf);
}

bool Mat::all_finite() const {
  for (double x : data) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

static void check_inner(int a, int b, const char* what) {
  if (a != b) {
    throw ShapeError(std::string("matmul dimension mismatch in ") + what +
                     ": " + std::to_string(a) + " vs " + std::to_string(b));
  }
}

void matmul_acc(const Mat& a, const Mat& b, Mat& out) {
  check_inner(a.cols, b.rows, "A*B");
  // i-k-j order keeps the inner loop contiguous over B and out rows.
  for (int i = 0; i < a.rows; ++i) {
    double* orow = out.row_ptr(i);
    const double* arow = a.row_ptr(i);
    for (int k = 0; k < a.cols; ++k) {
      const double av = arow[k];
      if (av == 0.0) continue;
      const double* brow = b.row_ptr(k);
      for (int j = 0; j < b.cols; ++j) {
        orow[j] += av * brow[j];
      }
    }
  }
}

Mat matmul(const Mat& a, const Mat& b) {
  Mat out(a.rows, b.cols);
  matmul_acc(a, b, out);
  return out;
}

void matmul_nt_acc(const Mat& a, const Mat& b, Mat& out) {
  check_inner(a.cols, b.cols, "A*B^T");
  for (int i = 0; i < a.rows; ++i) {
    const double* arow = a.row_ptr(i);
    double* orow = out.row_ptr(i);
    for (int j = 0; j < b.rows; ++j) {
      const double* brow = b.row_ptr(j);
      double acc = 0.0;
      for (int k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
      orow[j] += acc;
    }
  }
}

Mat matmul_nt(const Mat& a, const Mat& b) {
  Mat out(a.rows, b.rows);
  matmul_nt_acc(a, b, out);
  return out;
}

void matmul_tn_acc(const Mat& a, const Mat& b, Mat& out) {
  check_inner(a.rows, b.rows, "A^T*B");
  for (int k = 0; k < a.rows; ++k) {
    const double* arow = a.row_ptr(k);
    const double* brow = b.row_ptr(k);
    for (int i = 0; i < a.cols; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* orow = out.row_ptr(i);
      for (int j = 0; j < b.cols; ++j) orow[j] += av * brow[j];
    }
  }
}

Mat matmul_tn(const Mat& a, const Mat& b) {
  Mat out(a.cols, b.cols);
  matmul_tn_acc(a, b, out);
  return out;
}

void add_inplace(Mat& a, const Mat& b) {
  if (!a.same_shape(b)) throw ShapeError("add: shape mismatch");
  for (size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

Mat operator+(const Mat& a, const Mat& b) {
  Mat out = a;
  add_inplace(out, b);
  return out;
}

Mat operator-(const Mat& a, const Mat& b) {
  if (!a.same_shape(b)) throw ShapeError("sub: shape mismatch");
  Mat out = a;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
  return out;
}

Mat operator*(const Mat& a, double s) {
  Mat out = a;
  for (double& x : out.data) x *= s;
  return out;
}

}  // namespace tpcap
