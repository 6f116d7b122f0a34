#pragma once

// Reference computations used only by the tests. They deliberately take the
// slow, obvious route so they do not share code paths with the library.

#include "ikdl/kernel.hpp"
#include "ikdl/rng.hpp"

#include <cmath>
#include <vector>

namespace ikdl::oracle {

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.normal();
  return m;
}

inline Matrix normalized_columns(Matrix m) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) m.col(c).normalize();
  return m;
}

// Explicit feature map of (x'y + alpha)^2:
// [alpha, sqrt(2 alpha) x_i, x_i^2, sqrt(2) x_i x_j (i < j)]
inline Vector poly2_features(const Vector& x, double alpha) {
  const Eigen::Index m = x.size();
  std::vector<double> f;
  f.push_back(alpha);
  for (Eigen::Index i = 0; i < m; ++i) f.push_back(std::sqrt(2.0 * alpha) * x(i));
  for (Eigen::Index i = 0; i < m; ++i) f.push_back(x(i) * x(i));
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = i + 1; j < m; ++j) f.push_back(std::sqrt(2.0) * x(i) * x(j));
  return Eigen::Map<Vector>(f.data(), static_cast<Eigen::Index>(f.size()));
}

inline Matrix poly2_features(const Matrix& signals, double alpha) {
  Matrix out;
  for (Eigen::Index c = 0; c < signals.cols(); ++c) {
    const Vector f = poly2_features(Vector(signals.col(c)), alpha);
    if (c == 0) out.resize(f.size(), signals.cols());
    out.col(c) = f;
  }
  return out;
}

struct GreedyResult {
  std::vector<Eigen::Index> support;
  Vector coeffs;
};

// OMP re-solving the normal equations with an explicit inverse at every step.
inline GreedyResult normal_equations_omp(const Matrix& d, const Vector& y, int s) {
  GreedyResult out;
  Vector r = y;
  for (int step = 0; step < s; ++step) {
    Eigen::Index best = -1;
    double best_val = -1.0;
    for (Eigen::Index j = 0; j < d.cols(); ++j) {
      bool used = false;
      for (auto k : out.support) used = used || k == j;
      if (used) continue;
      const double v = std::abs(d.col(j).dot(r));
      if (v > best_val) {
        best_val = v;
        best = j;
      }
    }
    out.support.push_back(best);
    Matrix ds(d.rows(), static_cast<Eigen::Index>(out.support.size()));
    for (std::size_t t = 0; t < out.support.size(); ++t) ds.col(static_cast<Eigen::Index>(t)) = d.col(out.support[t]);
    const Matrix inv = (ds.transpose() * ds).inverse();
    out.coeffs = inv * ds.transpose() * y;
    r = y - ds * out.coeffs;
  }
  return out;
}

// Line-by-line linear atom sweep with dense row masks, with the same sign
// convention as the library (largest coefficient made positive).
inline void transliterated_sweep(const Matrix& y, Matrix& d, const Matrix& dbar, Matrix& x,
                                 double gamma, bool updated_error) {
  Matrix e = y - d * x;
  for (Eigen::Index j = 0; j < d.cols(); ++j) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index l = 0; l < x.cols(); ++l)
      if (x(j, l) != 0.0) idx.push_back(l);
    if (idx.empty()) continue;
    const auto k = static_cast<Eigen::Index>(idx.size());
    Matrix ei(y.rows(), k);
    Vector xj(k);
    for (Eigen::Index t = 0; t < k; ++t) {
      ei.col(t) = e.col(idx[static_cast<std::size_t>(t)]);
      xj(t) = x(j, idx[static_cast<std::size_t>(t)]);
    }
    Matrix f(y.rows(), k);
    for (Eigen::Index t = 0; t < k; ++t) f.col(t) = ei.col(t) + d.col(j) * xj(t);
    Vector dj = f * xj;
    if (dbar.cols() > 0) dj = dj - 2.0 * gamma * dbar * dbar.transpose() * d.col(j);
    dj = dj / dj.norm();
    Vector xn(k);
    for (Eigen::Index t = 0; t < k; ++t)
      xn(t) = updated_error ? ei.col(t).dot(dj) + xj(t) : f.col(t).dot(dj);
    Eigen::Index big = 0;
    for (Eigen::Index t = 1; t < k; ++t)
      if (std::abs(xn(t)) > std::abs(xn(big))) big = t;
    if (xn(big) < 0) {
      dj = -dj;
      xn = -xn;
    }
    d.col(j) = dj;
    for (Eigen::Index t = 0; t < k; ++t) {
      x(j, idx[static_cast<std::size_t>(t)]) = xn(t);
      e.col(idx[static_cast<std::size_t>(t)]) = f.col(t) - dj * xn(t);
    }
  }
}

// Dense matrix with at most `s` random nonzeros per column, rows chosen at random.
inline Matrix random_sparse_codes(Eigen::Index n, Eigen::Index cols, int s, std::uint64_t seed) {
  Rng rng(seed);
  Matrix x = Matrix::Zero(n, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (auto r : rng.sample_without_replacement(static_cast<std::size_t>(n), static_cast<std::size_t>(s)))
      x(static_cast<Eigen::Index>(r), c) = rng.normal();
  return x;
}

}  // namespace ikdl::oracle
