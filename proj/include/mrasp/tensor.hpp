#pragma once

// Row-major double matrices and the handful of dense ops the model needs.
// Loops are written ikj-style so the inner dimension is contiguous; summation
// order is fixed, so results are bit-reproducible.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "mrasp/common.hpp"

namespace mrasp {

struct Mat {
  size_t rows = 0, cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(size_t r, size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

  double* row(size_t i) { return a.data() + i * cols; }
  const double* row(size_t i) const { return a.data() + i * cols; }
  double& at(size_t i, size_t j) { return a[i * cols + j]; }
  double at(size_t i, size_t j) const { return a[i * cols + j]; }
  size_t size() const { return a.size(); }
  bool empty() const { return a.empty(); }

  void zero() { std::fill(a.begin(), a.end(), 0.0); }

  bool finite() const {
    for (double v : a)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

// Y = X * W (+ Y if accumulate). X: [T x m], W: [m x n], Y: [T x n].
inline void matmul(const Mat& x, const Mat& w, Mat& y, bool accumulate = false) {
  if (!accumulate) y.zero();
  for (size_t t = 0; t < x.rows; ++t) {
    const double* xr = x.row(t);
    double* yr = y.row(t);
    for (size_t i = 0; i < x.cols; ++i) {
      const double xi = xr[i];
      if (xi == 0.0) continue;
      const double* wr = w.row(i);
      for (size_t j = 0; j < w.cols; ++j) yr[j] += xi * wr[j];
    }
  }
}

// Y = X * W^T (+). X: [T x n], W: [m x n], Y: [T x m].
inline void matmul_transposed(const Mat& x, const Mat& w, Mat& y, bool accumulate = false) {
  if (!accumulate) y.zero();
  for (size_t t = 0; t < x.rows; ++t) {
    const double* xr = x.row(t);
    double* yr = y.row(t);
    for (size_t i = 0; i < w.rows; ++i) {
      const double* wr = w.row(i);
      double acc = 0.0;
      for (size_t j = 0; j < w.cols; ++j) acc += xr[j] * wr[j];
      yr[i] += acc;
    }
  }
}

// W += X^T * D. X: [T x m], D: [T x n], W: [m x n].
inline void accumulate_outer(const Mat& x, const Mat& d, Mat& w) {
  for (size_t t = 0; t < x.rows; ++t) {
    const double* xr = x.row(t);
    const double* dr = d.row(t);
    for (size_t i = 0; i < x.cols; ++i) {
      const double xi = xr[i];
      if (xi == 0.0) continue;
      double* wr = w.row(i);
      for (size_t j = 0; j < d.cols; ++j) wr[j] += xi * dr[j];
    }
  }
}

inline void add_row_inplace(Mat& y, const Mat& bias) {
  for (size_t t = 0; t < y.rows; ++t) {
    double* yr = y.row(t);
    const double* br = bias.row(0);
    for (size_t j = 0; j < y.cols; ++j) yr[j] += br[j];
  }
}

// bias_grad += column sums of d.
inline void accumulate_row_sums(const Mat& d, Mat& bias_grad) {
  for (size_t t = 0; t < d.rows; ++t) {
    const double* dr = d.row(t);
    double* br = bias_grad.row(0);
    for (size_t j = 0; j < d.cols; ++j) br[j] += dr[j];
  }
}

inline void add_inplace(Mat& y, const Mat& x) {
  for (size_t i = 0; i < y.a.size(); ++i) y.a[i] += x.a[i];
}

inline double dot(const double* u, const double* v, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) acc += u[i] * v[i];
  return acc;
}

}  // namespace mrasp
