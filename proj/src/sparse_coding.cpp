#include "ikdl/sparse_coding.hpp"

#include "ikdl/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <thread>

namespace ikdl {

namespace {

// Picks the unselected, non-excluded atom with the largest |corr|; lowest index wins ties.
Eigen::Index pick_atom(const Vector& corr, const std::vector<char>& blocked) {
  Eigen::Index best = -1;
  double best_val = 0.0;
  for (Eigen::Index j = 0; j < corr.size(); ++j) {
    if (blocked[j]) continue;
    const double v = std::abs(corr(j));
    if (v > best_val) {
      best_val = v;
      best = j;
    }
  }
  return best;
}

void check_sparsity(int sparsity, Eigen::Index n_atoms) {
  if (sparsity < 1) throw InputError("sparsity must be >= 1");
  if (n_atoms < 1) throw InputError("dictionary has no atoms");
}

SparseCode omp_unchecked(const Matrix& dict, const Eigen::Ref<const Vector>& y, int sparsity,
                         double eps) {
  const Eigen::Index n = dict.cols();
  const auto budget = std::min<Eigen::Index>(sparsity, n);
  SparseCode code;
  std::vector<char> blocked(n, 0);
  Vector residual = y;
  Vector coeffs;
  double rnorm = residual.norm();
  code.residual_history.push_back(rnorm);

  while (static_cast<Eigen::Index>(code.support.size()) < budget && rnorm > eps) {
    const Vector corr = dict.transpose() * residual;
    const Eigen::Index j = pick_atom(corr, blocked);
    if (j < 0) break;
    blocked[j] = 1;

    std::vector<Eigen::Index> trial = code.support;
    trial.push_back(j);
    const auto k = static_cast<Eigen::Index>(trial.size());
    Matrix sub(dict.rows(), k);
    for (Eigen::Index t = 0; t < k; ++t) sub.col(t) = dict.col(trial[t]);
    const Matrix g = sub.transpose() * sub;
    const Vector rhs = sub.transpose() * y;
    Vector x;
    if (!spd_solve(g, rhs, x)) {
      ++code.dropped_candidates;
      continue;
    }
    code.support = std::move(trial);
    coeffs = std::move(x);
    residual = y - sub * coeffs;
    rnorm = residual.norm();
    code.residual_history.push_back(rnorm);
  }
  code.values.assign(coeffs.data(), coeffs.data() + coeffs.size());
  code.residual_sq = rnorm * rnorm;
  return code;
}

SparseCode komp_unchecked(const Matrix& g, const Eigen::Ref<const Vector>& p, double kyy,
                          int sparsity, double eps) {
  const Eigen::Index n = g.rows();
  const auto budget = std::min<Eigen::Index>(sparsity, n);
  SparseCode code;
  std::vector<char> blocked(n, 0);
  Vector coeffs;
  double res_sq = std::max(kyy, 0.0);
  code.residual_history.push_back(std::sqrt(res_sq));
  const double eps_sq = eps * eps;

  while (static_cast<Eigen::Index>(code.support.size()) < budget && res_sq > eps_sq) {
    Vector corr = p;
    for (std::size_t t = 0; t < code.support.size(); ++t)
      corr -= g.col(code.support[t]) * coeffs(static_cast<Eigen::Index>(t));
    const Eigen::Index j = pick_atom(corr, blocked);
    if (j < 0) break;
    blocked[j] = 1;

    std::vector<Eigen::Index> trial = code.support;
    trial.push_back(j);
    const auto k = static_cast<Eigen::Index>(trial.size());
    Matrix gss(k, k);
    Vector ps(k);
    for (Eigen::Index a = 0; a < k; ++a) {
      ps(a) = p(trial[a]);
      for (Eigen::Index b = 0; b < k; ++b) gss(a, b) = g(trial[a], trial[b]);
    }
    Vector x;
    if (!spd_solve(gss, ps, x)) {
      ++code.dropped_candidates;
      continue;
    }
    code.support = std::move(trial);
    coeffs = std::move(x);
    res_sq = std::max(kyy - 2.0 * ps.dot(coeffs) + coeffs.dot(gss * coeffs), 0.0);
    code.residual_history.push_back(std::sqrt(res_sq));
  }
  code.values.assign(coeffs.data(), coeffs.data() + coeffs.size());
  code.residual_sq = res_sq;
  return code;
}

template <typename Fn>
void for_each_column(Eigen::Index count, int threads, Fn&& fn) {
  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(count)));
  auto run = [&](Eigen::Index lo, Eigen::Index hi, std::exception_ptr& err) {
    try {
      for (Eigen::Index l = lo; l < hi; ++l) fn(l);
    } catch (...) {
      err = std::current_exception();
    }
  };
  std::vector<std::exception_ptr> errors(workers);
  if (workers == 1) {
    run(0, count, errors[0]);
  } else {
    std::vector<std::thread> pool;
    const Eigen::Index chunk = (count + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      const Eigen::Index lo = w * chunk, hi = std::min(count, lo + chunk);
      if (lo < hi) pool.emplace_back(run, lo, hi, std::ref(errors[w]));
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

void scatter(const SparseCode& code, Matrix& out, Eigen::Index col) {
  for (std::size_t t = 0; t < code.support.size(); ++t) out(code.support[t], col) = code.values[t];
}

}  // namespace

Vector SparseCode::dense(Eigen::Index n_atoms) const {
  Vector x = Vector::Zero(n_atoms);
  for (std::size_t t = 0; t < support.size(); ++t) x(support[t]) = values[t];
  return x;
}

void check_unit_atoms(const Matrix& dictionary) {
  for (Eigen::Index j = 0; j < dictionary.cols(); ++j) {
    const double norm = dictionary.col(j).norm();
    if (!(std::abs(norm - 1.0) <= 1e-8))
      throw InputError("atom " + std::to_string(j) + " is not unit-norm (norm " +
                       std::to_string(norm) + ")");
  }
}

SparseCode omp(const Matrix& dictionary, const Eigen::Ref<const Vector>& y, int sparsity,
               std::optional<double> eps) {
  check_sparsity(sparsity, dictionary.cols());
  if (dictionary.rows() != y.size()) throw InputError("omp: signal dimension mismatch");
  if (!y.allFinite()) throw InputError("omp: non-finite signal");
  check_unit_atoms(dictionary);
  const double tol = eps.value_or(1e-6 * y.norm());
  if (tol < 0.0) throw InputError("omp: eps must be >= 0");
  return omp_unchecked(dictionary, y, sparsity, tol);
}

SparseCode komp(const Matrix& atom_gram, const Eigen::Ref<const Vector>& correlations, double kyy,
                int sparsity, std::optional<double> eps) {
  check_sparsity(sparsity, atom_gram.cols());
  if (atom_gram.rows() != atom_gram.cols() || atom_gram.rows() != correlations.size())
    throw InputError("komp: dimension mismatch");
  if (kyy < -1e-10) throw InputError("komp: negative k(y,y)");
  if (!correlations.allFinite() || !std::isfinite(kyy)) throw InputError("komp: non-finite input");
  const double tol = eps.value_or(1e-6 * std::sqrt(std::max(kyy, 0.0)));
  if (tol < 0.0) throw InputError("komp: eps must be >= 0");
  return komp_unchecked(atom_gram, correlations, kyy, sparsity, tol);
}

Matrix batch_omp(const Matrix& dictionary, const Matrix& signals, int sparsity,
                 std::optional<double> eps, int threads, BatchStats* stats) {
  check_sparsity(sparsity, dictionary.cols());
  if (dictionary.rows() != signals.rows()) throw InputError("batch_omp: dimension mismatch");
  check_unit_atoms(dictionary);
  Matrix codes = Matrix::Zero(dictionary.cols(), signals.cols());
  std::vector<int> dropped(signals.cols(), 0);
  for_each_column(signals.cols(), threads, [&](Eigen::Index l) {
    try {
      const auto y = signals.col(l);
      if (!y.allFinite()) throw InputError("non-finite signal");
      const double tol = eps.value_or(1e-6 * y.norm());
      const SparseCode code = omp_unchecked(dictionary, y, sparsity, tol);
      scatter(code, codes, l);
      dropped[l] = code.dropped_candidates;
    } catch (const InputError& e) {
      throw InputError("column " + std::to_string(l) + ": " + e.what());
    }
  });
  if (stats)
    for (int d : dropped) stats->dropped_candidates += d;
  return codes;
}

Matrix batch_komp(const Matrix& atom_gram, const Matrix& correlations, const Vector& kyy,
                  int sparsity, std::optional<double> eps, int threads, BatchStats* stats) {
  check_sparsity(sparsity, atom_gram.cols());
  if (atom_gram.rows() != atom_gram.cols() || correlations.rows() != atom_gram.rows() ||
      correlations.cols() != kyy.size())
    throw InputError("batch_komp: dimension mismatch");
  Matrix codes = Matrix::Zero(atom_gram.cols(), correlations.cols());
  std::vector<int> dropped(correlations.cols(), 0);
  for_each_column(correlations.cols(), threads, [&](Eigen::Index l) {
    try {
      const SparseCode code = komp(atom_gram, correlations.col(l), kyy(l), sparsity, eps);
      scatter(code, codes, l);
      dropped[l] = code.dropped_candidates;
    } catch (const InputError& e) {
      throw InputError("column " + std::to_string(l) + ": " + e.what());
    }
  });
  if (stats)
    for (int d : dropped) stats->dropped_candidates += d;
  return codes;
}

}  // namespace ikdl
