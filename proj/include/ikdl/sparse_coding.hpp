#pragma once

#include "ikdl/kernel.hpp"

#include <optional>
#include <vector>

namespace ikdl {

// Sparse representation of one signal: coefficients `values[k]` on atom
// `support[k]`, in selection order.
struct SparseCode {
  std::vector<Eigen::Index> support;
  std::vector<double> values;
  // Squared residual norm at exit (clamped at zero for the kernel coder).
  double residual_sq = 0.0;
  // Residual norm before the first step and after each accepted step.
  std::vector<double> residual_history;
  // Candidates rejected because their support Gram could not be factored.
  int dropped_candidates = 0;

  Vector dense(Eigen::Index n_atoms) const;
};

// Orthogonal Matching Pursuit over a dictionary with unit-norm columns.
// Stops when `sparsity` atoms are selected or the residual norm is <= eps;
// eps defaults to 1e-6 * |y|. Ties in the correlation pick the lowest index.
SparseCode omp(const Matrix& dictionary, const Eigen::Ref<const Vector>& y, int sparsity,
               std::optional<double> eps = std::nullopt);

// Kernel OMP. `atom_gram` = A' K A, `correlations` = A' k(Y, y), `kyy` = k(y, y).
// eps defaults to 1e-6 * sqrt(kyy).
SparseCode komp(const Matrix& atom_gram, const Eigen::Ref<const Vector>& correlations, double kyy,
                int sparsity, std::optional<double> eps = std::nullopt);

struct BatchStats {
  long dropped_candidates = 0;
};

// Codes every column of `signals`; returns the dense n x N code matrix.
// Columns are independent, so the result does not depend on `threads`.
Matrix batch_omp(const Matrix& dictionary, const Matrix& signals, int sparsity,
                 std::optional<double> eps = std::nullopt, int threads = 1,
                 BatchStats* stats = nullptr);

// Kernel variant: column l of `correlations` and entry l of `kyy` describe signal l.
Matrix batch_komp(const Matrix& atom_gram, const Matrix& correlations, const Vector& kyy,
                  int sparsity, std::optional<double> eps = std::nullopt, int threads = 1,
                  BatchStats* stats = nullptr);

// Throws InputError if some column norm differs from 1 by more than 1e-8.
void check_unit_atoms(const Matrix& dictionary);

}  // namespace ikdl
