#pragma once

// PCA via cyclic Jacobi eigendecomposition of the mean-centered covariance.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "mrasp/common.hpp"
#include "mrasp/tensor.hpp"

namespace mrasp {

struct PcaProjection {
  Mat coordinates;                        // [n x dims]
  Mat components;                         // [dims x d], rows orthonormal
  std::vector<double> explained_variance; // non-increasing
  bool degenerate = false;                // input rank < dims
};

namespace detail {

// Cyclic Jacobi for symmetric matrices. Returns eigenvalues (diagonal) in
// `a`; accumulates rotations into `vecs` (columns are eigenvectors).
inline void jacobi_eigen(Mat& a, Mat& vecs, double tol = 1e-10) {
  const size_t n = a.rows;
  vecs = Mat(n, n);
  for (size_t i = 0; i < n; ++i) vecs.at(i, i) = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (size_t i = 0; i < n; ++i)
      for (size_t j = i + 1; j < n; ++j) off += a.at(i, j) * a.at(i, j);
    if (std::sqrt(off) < tol) break;
    for (size_t p = 0; p < n; ++p) {
      for (size_t q = p + 1; q < n; ++q) {
        const double apq = a.at(p, q);
        if (std::abs(apq) < tol * 1e-3) continue;
        const double app = a.at(p, p), aqq = a.at(q, q);
        const double theta = 0.5 * (aqq - app) / apq;
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (size_t k = 0; k < n; ++k) {
          const double akp = a.at(k, p), akq = a.at(k, q);
          a.at(k, p) = c * akp - s * akq;
          a.at(k, q) = s * akp + c * akq;
        }
        for (size_t k = 0; k < n; ++k) {
          const double apk = a.at(p, k), aqk = a.at(q, k);
          a.at(p, k) = c * apk - s * aqk;
          a.at(q, k) = s * apk + c * aqk;
        }
        for (size_t k = 0; k < n; ++k) {
          const double vkp = vecs.at(k, p), vkq = vecs.at(k, q);
          vecs.at(k, p) = c * vkp - s * vkq;
          vecs.at(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
}

}  // namespace detail

// Projects row vectors onto the top `dims` principal components. Components
// follow the sign convention that each one's largest-magnitude coordinate is
// positive. Rank-deficient inputs come back flagged degenerate with
// zero-variance trailing components.
inline PcaProjection pca_project(const std::vector<std::vector<double>>& vectors,
                                 size_t dims = 2) {
  if (vectors.size() < dims + 1)
    throw UsageError("TooFewVectors: need at least dims+1 points");
  const size_t n = vectors.size();
  const size_t d = vectors[0].size();
  for (const auto& v : vectors)
    if (v.size() != d) throw UsageError("DimensionMismatch in pca input");
  if (dims == 0 || dims > d) throw UsageError("InvalidDims");

  std::vector<double> mean(d, 0.0);
  for (const auto& v : vectors)
    for (size_t j = 0; j < d; ++j) mean[j] += v[j];
  for (double& m : mean) m /= double(n);

  Mat centered(n, d);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < d; ++j) centered.at(i, j) = vectors[i][j] - mean[j];

  // covariance = X^T X / n
  Mat cov(d, d);
  accumulate_outer(centered, centered, cov);
  for (double& v : cov.a) v /= double(n);

  Mat vecs;
  detail::jacobi_eigen(cov, vecs);
  std::vector<size_t> order(d);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(),
            [&](size_t x, size_t y) { return cov.at(x, x) > cov.at(y, y); });

  PcaProjection out;
  out.components = Mat(dims, d);
  out.explained_variance.resize(dims);
  for (size_t k = 0; k < dims; ++k) {
    const size_t col = order[k];
    double eig = cov.at(col, col);
    if (eig < 0.0 && eig > -1e-12) eig = 0.0;  // numerical noise
    out.explained_variance[k] = eig;
    // sign convention: largest |coordinate| positive
    size_t arg = 0;
    for (size_t j = 1; j < d; ++j)
      if (std::abs(vecs.at(j, col)) > std::abs(vecs.at(arg, col))) arg = j;
    const double sign = vecs.at(arg, col) >= 0.0 ? 1.0 : -1.0;
    for (size_t j = 0; j < d; ++j) out.components.at(k, j) = sign * vecs.at(j, col);
    if (out.explained_variance[k] <= 1e-12) out.degenerate = true;
  }

  out.coordinates = Mat(n, dims);
  for (size_t i = 0; i < n; ++i)
    for (size_t k = 0; k < dims; ++k)
      out.coordinates.at(i, k) = dot(centered.row(i), out.components.row(k), d);
  return out;
}

}  // namespace mrasp
