#pragma once

#include <Eigen/Dense>

#include <string>

namespace ikdl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class KernelKind { Linear, RBF, Polynomial };

struct KernelSpec {
  KernelKind kind = KernelKind::Linear;
  double sigma = 1.0;  // RBF width
  double alpha = 0.0;  // polynomial offset
  int beta = 1;        // polynomial degree

  static KernelSpec linear() { return {}; }
  static KernelSpec rbf(double sigma) { return {KernelKind::RBF, sigma, 0.0, 1}; }
  static KernelSpec polynomial(double alpha, int beta) {
    return {KernelKind::Polynomial, 1.0, alpha, beta};
  }

  // Throws InputError when sigma <= 0 (RBF) or beta < 1 (Polynomial).
  void validate() const;

  friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

std::string to_string(KernelKind kind);
KernelKind parse_kernel_kind(const std::string& name);
// Compact label such as "rbf(sigma=4)" used in reports.
std::string describe(const KernelSpec& spec);

double kernel_eval(const KernelSpec& spec, const Eigen::Ref<const Vector>& x,
                   const Eigen::Ref<const Vector>& y);

// Kernel matrix between two signal sets. entries(i, j) = k(a_i, b_j).
struct GramMatrix {
  Matrix entries;
  KernelSpec spec;
  bool symmetric = false;

  Eigen::Index rows() const { return entries.rows(); }
  Eigen::Index cols() const { return entries.cols(); }
};

// Entries are filled column by column with independent per-entry sums, so the
// result does not depend on `threads`.
GramMatrix gram(const KernelSpec& spec, const Matrix& a, const Matrix& b, int threads = 1);
GramMatrix gram(const KernelSpec& spec, const Matrix& a, int threads = 1);

// k(columns of signals, y), one entry per column.
Vector kernel_column(const KernelSpec& spec, const Matrix& signals,
                     const Eigen::Ref<const Vector>& y);

// Feature-space norm sqrt(a' K a), clamped at zero.
double knorm(const Eigen::Ref<const Vector>& a, const Matrix& k);

// Diagonal shift 1e-10 * trace(K) / N applied before Cholesky solves.
double psd_jitter(const Matrix& k);

// Cholesky solve of a symmetric PSD system. A failed or near-singular factor
// (pivot^2 <= 1e-12 * diagonal) is retried once with psd_jitter added to the
// diagonal. Returns false if the retry fails too.
bool spd_solve(const Matrix& system, const Vector& rhs, Vector& solution);

}  // namespace ikdl
