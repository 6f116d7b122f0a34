#include "ikdl/dict_learning.hpp"

#include "ikdl/error.hpp"
#include "ikdl/rng.hpp"
#include "ikdl/sparse_coding.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ikdl {

namespace {

constexpr double kCollapseNorm = 1e-12;
constexpr double kZeroNormSq = 1e-14;

std::vector<Eigen::Index> row_support(const Matrix& codes, Eigen::Index j) {
  std::vector<Eigen::Index> idx;
  for (Eigen::Index l = 0; l < codes.cols(); ++l)
    if (codes(j, l) != 0.0) idx.push_back(l);
  return idx;
}

Matrix gather_cols(const Matrix& m, const std::vector<Eigen::Index>& idx) {
  Matrix out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t t = 0; t < idx.size(); ++t) out.col(static_cast<Eigen::Index>(t)) = m.col(idx[t]);
  return out;
}

void scatter_cols(Matrix& m, const std::vector<Eigen::Index>& idx, const Matrix& block) {
  for (std::size_t t = 0; t < idx.size(); ++t) m.col(idx[t]) = block.col(static_cast<Eigen::Index>(t));
}

Vector gather_row(const Matrix& m, Eigen::Index j, const std::vector<Eigen::Index>& idx) {
  Vector v(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t t = 0; t < idx.size(); ++t) v(static_cast<Eigen::Index>(t)) = m(j, idx[t]);
  return v;
}

void scatter_row(Matrix& m, Eigen::Index j, const std::vector<Eigen::Index>& idx, const Vector& v) {
  for (std::size_t t = 0; t < idx.size(); ++t) m(j, idx[t]) = v(static_cast<Eigen::Index>(t));
}

// Makes the largest-magnitude coefficient positive.
void fix_sign(Eigen::Ref<Vector> atom, Vector& coeffs) {
  if (coeffs.size() == 0) return;
  Eigen::Index k = 0;
  coeffs.cwiseAbs().maxCoeff(&k);
  if (coeffs(k) < 0.0) {
    atom = -atom;
    coeffs = -coeffs;
  }
}

// Column indices ordered by decreasing residual; ties keep the lower index first.
std::vector<Eigen::Index> by_residual(const Vector& residual_sq) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(residual_sq.size()));
  for (Eigen::Index l = 0; l < residual_sq.size(); ++l) order[static_cast<std::size_t>(l)] = l;
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return residual_sq(a) > residual_sq(b);
  });
  return order;
}

Vector linear_residuals(const Matrix& error) { return error.colwise().squaredNorm().transpose(); }

Vector kernel_residuals(const Matrix& k, const Matrix& error) {
  return (error.array() * (k * error).array()).colwise().sum().transpose().cwiseMax(0.0);
}

// Normalized signal with the largest residual, skipping near-zero signals and
// columns in `taken`. Returns -1 if none is usable.
Eigen::Index worst_signal(const Vector& residual_sq, const Vector& signal_norm_sq,
                          std::vector<char>& taken) {
  for (Eigen::Index l : by_residual(residual_sq)) {
    if (taken[l] || signal_norm_sq(l) <= kZeroNormSq) continue;
    taken[l] = 1;
    return l;
  }
  return -1;
}

void check_classes(const std::vector<Matrix>& classes) {
  if (classes.empty()) throw InputError("training needs at least one class");
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i].cols() < 1)
      throw InputError("class " + std::to_string(i) + " has no training signals");
    if (classes[i].rows() != classes[0].rows())
      throw InputError("class " + std::to_string(i) + " has a different signal dimension");
    if (!classes[i].allFinite())
      throw InputError("class " + std::to_string(i) + " contains non-finite values");
  }
}

}  // namespace

std::string to_string(UpdateMode mode) { return mode == UpdateMode::AKSVD ? "AKSVD" : "UAKSVD"; }

UpdateMode parse_update_mode(const std::string& name) {
  if (name == "AKSVD" || name == "aksvd") return UpdateMode::AKSVD;
  if (name == "UAKSVD" || name == "uaksvd") return UpdateMode::UAKSVD;
  throw InputError("unknown update mode '" + name + "'");
}

void TrainConfig::validate() const {
  if (n_atoms < 1) throw InputError("n_atoms must be >= 1");
  if (sparsity < 1 || sparsity > n_atoms) throw InputError("sparsity must be in [1, n_atoms]");
  if (iterations < 1) throw InputError("iterations must be >= 1");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw InputError("gamma must be >= 0");
  if (threads < 1) throw InputError("threads must be >= 1");
  if (kernel) kernel->validate();
}

ClassGrams build_class_grams(const KernelSpec& spec, const std::vector<Matrix>& classes,
                             int threads) {
  check_classes(classes);
  ClassGrams g;
  g.spec = spec;
  Eigen::Index total = 0;
  for (const auto& c : classes) {
    g.offsets.push_back(total);
    g.sizes.push_back(c.cols());
    total += c.cols();
  }
  Matrix all(classes[0].rows(), total);
  for (std::size_t i = 0; i < classes.size(); ++i)
    all.middleCols(g.offsets[i], g.sizes[i]) = classes[i];
  g.full = gram(spec, all, threads).entries;
  return g;
}

Dictionary init_dictionary(const Matrix& signals, int n_atoms, std::uint64_t seed) {
  if (n_atoms < 1) throw InputError("init_dictionary: n_atoms must be >= 1");
  if (signals.rows() < 1) throw InputError("init_dictionary: empty signal dimension");
  Rng rng(seed);
  const auto order = rng.sample_without_replacement(static_cast<std::size_t>(signals.cols()),
                                                    static_cast<std::size_t>(signals.cols()));
  Dictionary d{Matrix(signals.rows(), n_atoms)};
  Eigen::Index filled = 0;
  int failures = 0;
  for (std::size_t p : order) {
    if (filled == n_atoms) break;
    const auto col = signals.col(static_cast<Eigen::Index>(p));
    const double nsq = col.squaredNorm();
    if (nsq <= kZeroNormSq) {
      if (++failures > 10 * n_atoms) throw NumericalError("init_dictionary: too many zero signals");
      continue;
    }
    d.atoms.col(filled++) = col / std::sqrt(nsq);
  }
  while (filled < n_atoms) {
    Vector g(signals.rows());
    for (Eigen::Index r = 0; r < g.size(); ++r) g(r) = rng.normal();
    const double nrm = g.norm();
    if (nrm <= 0.0) {
      if (++failures > 10 * n_atoms) throw NumericalError("init_dictionary: degenerate draw");
      continue;
    }
    d.atoms.col(filled++) = g / nrm;
  }
  return d;
}

CoefDictionary init_coef_dictionary(const Matrix& class_gram, int n_atoms, std::uint64_t seed) {
  if (n_atoms < 1) throw InputError("init_coef_dictionary: n_atoms must be >= 1");
  const Eigen::Index n_signals = class_gram.rows();
  if (n_signals < 1 || class_gram.cols() != n_signals)
    throw InputError("init_coef_dictionary: Gram must be square and non-empty");
  Rng rng(seed);
  const auto order = rng.sample_without_replacement(static_cast<std::size_t>(n_signals),
                                                    static_cast<std::size_t>(n_signals));
  CoefDictionary a{Matrix::Zero(n_signals, n_atoms)};
  Eigen::Index filled = 0;
  int failures = 0;
  for (std::size_t p : order) {
    if (filled == n_atoms) break;
    const auto idx = static_cast<Eigen::Index>(p);
    const double kpp = class_gram(idx, idx);
    if (kpp <= kZeroNormSq) {
      if (++failures > 10 * n_atoms) throw NumericalError("init_coef_dictionary: degenerate Gram");
      continue;
    }
    a.coefs(idx, filled++) = 1.0 / std::sqrt(kpp);
  }
  while (filled < n_atoms) {
    Vector g(n_signals);
    for (Eigen::Index r = 0; r < n_signals; ++r) g(r) = rng.normal();
    const double nrm = knorm(g, class_gram);
    if (nrm <= kCollapseNorm) {
      if (++failures > 10 * n_atoms) throw NumericalError("init_coef_dictionary: degenerate Gram");
      continue;
    }
    a.coefs.col(filled++) = g / nrm;
  }
  return a;
}

Matrix complementary_dictionary(const std::vector<Dictionary>& dicts, std::size_t skip) {
  Eigen::Index rows = 0, cols = 0;
  for (std::size_t l = 0; l < dicts.size(); ++l) {
    rows = dicts[l].atoms.rows();
    if (l != skip) cols += dicts[l].atoms.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < dicts.size(); ++l) {
    if (l == skip) continue;
    out.middleCols(at, dicts[l].atoms.cols()) = dicts[l].atoms;
    at += dicts[l].atoms.cols();
  }
  return out;
}

Matrix complementary_operator(const ClassGrams& grams, const std::vector<CoefDictionary>& coefs,
                              std::size_t i) {
  Eigen::Index rows = 0;
  for (std::size_t l = 0; l < coefs.size(); ++l)
    if (l != i) rows += coefs[l].coefs.cols();
  Matrix khat(rows, grams.sizes[i]);
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < coefs.size(); ++l) {
    if (l == i) continue;
    const auto nl = coefs[l].coefs.cols();
    khat.middleRows(at, nl).noalias() = coefs[l].coefs.transpose() * grams.cross(i, l);
    at += nl;
  }
  return khat;
}

LinearSweepResult idl_atom_sweep(const Matrix& signals, Dictionary dict, const Matrix& complement,
                                 Matrix codes, double gamma, UpdateMode mode) {
  Matrix& d = dict.atoms;
  if (d.rows() != signals.rows() || codes.rows() != d.cols() || codes.cols() != signals.cols())
    throw InputError("idl_atom_sweep: inconsistent shapes");
  if (complement.cols() > 0 && complement.rows() != signals.rows())
    throw InputError("idl_atom_sweep: complementary dictionary has wrong row count");

  LinearSweepResult out;
  Matrix error = signals - d * codes;
  const Vector signal_norm_sq = signals.colwise().squaredNorm().transpose();
  const bool penalized = gamma > 0.0 && complement.cols() > 0;

  for (Eigen::Index j = 0; j < d.cols(); ++j) {
    const auto support = row_support(codes, j);
    if (support.empty()) {
      ++out.stats.skipped_atoms;
      continue;
    }
    const Vector x = gather_row(codes, j, support);
    const Matrix e_sub = gather_cols(error, support);
    const Matrix f = e_sub + d.col(j) * x.transpose();

    Vector atom = f * x;
    if (penalized) atom.noalias() -= 2.0 * gamma * (complement * (complement.transpose() * d.col(j)));
    const double nrm = atom.norm();

    if (!(nrm >= kCollapseNorm)) {
      scatter_cols(error, support, f);
      scatter_row(codes, j, support, Vector::Zero(x.size()));
      std::vector<char> taken(static_cast<std::size_t>(signals.cols()), 0);
      const Eigen::Index l = worst_signal(linear_residuals(error), signal_norm_sq, taken);
      if (l >= 0) d.col(j) = signals.col(l) / std::sqrt(signal_norm_sq(l));
      ++out.stats.collapsed_atoms;
      continue;
    }
    atom /= nrm;

    Vector xnew = mode == UpdateMode::AKSVD ? Vector(f.transpose() * atom)
                                            : Vector(e_sub.transpose() * atom + x);
    fix_sign(atom, xnew);
    d.col(j) = atom;
    scatter_row(codes, j, support, xnew);
    scatter_cols(error, support, f - atom * xnew.transpose());
  }

  out.dict = std::move(dict);
  out.codes = std::move(codes);
  out.error = std::move(error);
  return out;
}

Vector atom_power_step(const Matrix& class_gram, const Matrix& f, const Vector& x,
                       const Matrix& penalty, double gamma, const Vector& atom) {
  Vector next = class_gram * (f * x);
  if (gamma > 0.0 && penalty.size() > 0) next.noalias() -= 2.0 * gamma * (penalty * atom);
  return next;
}

KernelSweepResult ikdl_atom_sweep(const Matrix& class_gram, CoefDictionary dict, const Matrix& khat,
                                  Matrix codes, double gamma, UpdateMode mode) {
  Matrix& a = dict.coefs;
  const Eigen::Index n_signals = class_gram.rows();
  if (class_gram.cols() != n_signals || a.rows() != n_signals || codes.rows() != a.cols() ||
      codes.cols() != n_signals)
    throw InputError("ikdl_atom_sweep: inconsistent shapes");
  if (khat.rows() > 0 && khat.cols() != n_signals)
    throw InputError("ikdl_atom_sweep: complementary operator has wrong column count");

  KernelSweepResult out;
  Matrix error = Matrix::Identity(n_signals, n_signals) - a * codes;
  const bool penalized = gamma > 0.0 && khat.rows() > 0;
  Matrix penalty;
  if (penalized) penalty.noalias() = khat.transpose() * khat;
  const Vector diag = class_gram.diagonal();

  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    const auto support = row_support(codes, j);
    if (support.empty()) {
      ++out.stats.skipped_atoms;
      continue;
    }
    const Vector x = gather_row(codes, j, support);
    const Matrix e_sub = gather_cols(error, support);
    const Matrix f = e_sub + a.col(j) * x.transpose();

    Vector atom = atom_power_step(class_gram, f, x, penalty, penalized ? gamma : 0.0, a.col(j));
    const double nrm = knorm(atom, class_gram);

    if (!(nrm >= kCollapseNorm)) {
      scatter_cols(error, support, f);
      scatter_row(codes, j, support, Vector::Zero(x.size()));
      std::vector<char> taken(static_cast<std::size_t>(n_signals), 0);
      const Eigen::Index l = worst_signal(kernel_residuals(class_gram, error), diag, taken);
      if (l >= 0) {
        a.col(j).setZero();
        a(l, j) = 1.0 / std::sqrt(diag(l));
      }
      ++out.stats.collapsed_atoms;
      continue;
    }
    atom /= nrm;

    const Vector k_atom = class_gram * atom;
    Vector xnew = mode == UpdateMode::AKSVD ? Vector(f.transpose() * k_atom)
                                            : Vector(e_sub.transpose() * k_atom + x);
    fix_sign(atom, xnew);
    a.col(j) = atom;
    scatter_row(codes, j, support, xnew);
    scatter_cols(error, support, f - atom * xnew.transpose());
  }

  out.dict = std::move(dict);
  out.codes = std::move(codes);
  out.error = std::move(error);
  return out;
}

Vector exact_atom_solve(const Matrix& class_gram, const Matrix& f, const Vector& x, double gamma,
                        const Matrix& khat) {
  if (f.rows() != class_gram.rows() || f.cols() != x.size())
    throw InputError("exact_atom_solve: inconsistent shapes");
  Matrix system = class_gram * x.squaredNorm();
  if (gamma > 0.0 && khat.rows() > 0) system.noalias() += 2.0 * gamma * khat.transpose() * khat;
  const Vector rhs = class_gram * (f * x);
  Vector a;
  if (!spd_solve(system, rhs, a)) throw NumericalError("exact_atom_solve: singular system");
  return a;
}

int replace_unused_atoms(const Matrix& signals, Dictionary& dict, const Matrix& codes,
                         const Matrix& error) {
  std::vector<Eigen::Index> dead;
  for (Eigen::Index j = 0; j < codes.rows(); ++j)
    if ((codes.row(j).array() == 0.0).all()) dead.push_back(j);
  if (dead.empty()) return 0;
  const Vector residual = linear_residuals(error);
  const Vector norms = signals.colwise().squaredNorm().transpose();
  std::vector<char> taken(static_cast<std::size_t>(signals.cols()), 0);
  int replaced = 0;
  for (Eigen::Index j : dead) {
    const Eigen::Index l = worst_signal(residual, norms, taken);
    if (l < 0) break;
    dict.atoms.col(j) = signals.col(l) / std::sqrt(norms(l));
    ++replaced;
  }
  return replaced;
}

int replace_unused_atoms(const Matrix& class_gram, CoefDictionary& dict, const Matrix& codes,
                         const Matrix& error) {
  std::vector<Eigen::Index> dead;
  for (Eigen::Index j = 0; j < codes.rows(); ++j)
    if ((codes.row(j).array() == 0.0).all()) dead.push_back(j);
  if (dead.empty()) return 0;
  const Vector residual = kernel_residuals(class_gram, error);
  const Vector diag = class_gram.diagonal();
  std::vector<char> taken(static_cast<std::size_t>(class_gram.rows()), 0);
  int replaced = 0;
  for (Eigen::Index j : dead) {
    const Eigen::Index l = worst_signal(residual, diag, taken);
    if (l < 0) break;
    dict.coefs.col(j).setZero();
    dict.coefs(l, j) = 1.0 / std::sqrt(diag(l));
    ++replaced;
  }
  return replaced;
}

double objective_idl(const std::vector<Matrix>& classes, const std::vector<Dictionary>& dicts,
                     const std::vector<Matrix>& codes, double gamma) {
  if (classes.size() != dicts.size() || classes.size() != codes.size())
    throw InputError("objective_idl: class count mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const auto& d = dicts[i].atoms;
    if (d.rows() != classes[i].rows() || codes[i].rows() != d.cols() ||
        codes[i].cols() != classes[i].cols())
      throw InputError("objective_idl: shape mismatch in class " + std::to_string(i));
    total += (classes[i] - d * codes[i]).squaredNorm();
  }
  if (gamma > 0.0) {
    double penalty = 0.0;
    for (std::size_t i = 0; i < dicts.size(); ++i)
      for (std::size_t l = 0; l < dicts.size(); ++l)
        if (l != i) penalty += (dicts[i].atoms.transpose() * dicts[l].atoms).squaredNorm();
    total += gamma * penalty;
  }
  return total;
}

double objective_ikdl(const ClassGrams& grams, const std::vector<CoefDictionary>& coefs,
                      const std::vector<Matrix>& codes, double gamma) {
  if (grams.classes() != coefs.size() || coefs.size() != codes.size())
    throw InputError("objective_ikdl: class count mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < coefs.size(); ++i) {
    const auto& a = coefs[i].coefs;
    const Eigen::Index ni = grams.sizes[i];
    if (a.rows() != ni || codes[i].rows() != a.cols() || codes[i].cols() != ni)
      throw InputError("objective_ikdl: shape mismatch in class " + std::to_string(i));
    const Matrix e = Matrix::Identity(ni, ni) - a * codes[i];
    total += (e.array() * (grams.class_gram(i) * e).array()).sum();
  }
  if (gamma > 0.0) {
    double penalty = 0.0;
    for (std::size_t i = 0; i < coefs.size(); ++i)
      for (std::size_t l = 0; l < coefs.size(); ++l)
        if (l != i)
          penalty +=
              (coefs[i].coefs.transpose() * grams.cross(l, i) * coefs[l].coefs).squaredNorm();
    total += gamma * penalty;
  }
  return total;
}

LinearTrainResult train_idl(const std::vector<Matrix>& classes, const TrainConfig& cfg,
                            std::vector<Dictionary> initial) {
  cfg.validate();
  if (cfg.kernel) throw InputError("train_idl: configuration has a kernel; use train_ikdl");
  check_classes(classes);
  const std::size_t n_classes = classes.size();

  LinearTrainResult out;
  if (initial.empty()) {
    for (std::size_t i = 0; i < n_classes; ++i)
      initial.push_back(init_dictionary(classes[i], cfg.n_atoms, derive_seed(cfg.seed, i)));
  } else if (initial.size() != n_classes) {
    throw InputError("train_idl: initial dictionary count mismatch");
  }
  out.dicts = std::move(initial);

  auto code = [&](std::size_t i) {
    return batch_omp(out.dicts[i].atoms, classes[i], cfg.sparsity, 0.0, cfg.threads);
  };
  for (std::size_t i = 0; i < n_classes; ++i) out.codes.push_back(code(i));
  out.objective.push_back(objective_idl(classes, out.dicts, out.codes, cfg.gamma));

  for (int it = 1; it <= cfg.iterations; ++it) {
    for (std::size_t i = 0; i < n_classes; ++i) {
      // Iteration 1 reuses the initial codes: dictionary i has not changed yet.
      if (cfg.recode_every_iteration && it > 1) out.codes[i] = code(i);
      const Matrix complement = complementary_dictionary(out.dicts, i);
      auto r = idl_atom_sweep(classes[i], std::move(out.dicts[i]), complement,
                              std::move(out.codes[i]), cfg.gamma, cfg.mode);
      r.stats.replaced_atoms += replace_unused_atoms(classes[i], r.dict, r.codes, r.error);
      out.stats += r.stats;
      out.dicts[i] = std::move(r.dict);
      out.codes[i] = std::move(r.codes);
    }
    out.objective.push_back(objective_idl(classes, out.dicts, out.codes, cfg.gamma));
  }
  return out;
}

KernelTrainResult train_ikdl(const std::vector<Matrix>& classes, const TrainConfig& cfg,
                             std::vector<CoefDictionary> initial) {
  cfg.validate();
  if (!cfg.kernel) throw InputError("train_ikdl: configuration has no kernel");
  check_classes(classes);
  const std::size_t n_classes = classes.size();

  KernelTrainResult out;
  out.grams = build_class_grams(*cfg.kernel, classes, cfg.threads);
  std::vector<Matrix> kii;
  for (std::size_t i = 0; i < n_classes; ++i) kii.push_back(out.grams.class_gram(i));

  if (initial.empty()) {
    for (std::size_t i = 0; i < n_classes; ++i)
      initial.push_back(init_coef_dictionary(kii[i], cfg.n_atoms, derive_seed(cfg.seed, i)));
  } else if (initial.size() != n_classes) {
    throw InputError("train_ikdl: initial dictionary count mismatch");
  }
  out.coefs = std::move(initial);

  auto code = [&](std::size_t i) {
    const Matrix& a = out.coefs[i].coefs;
    const Matrix correlations = a.transpose() * kii[i];
    const Matrix atom_gram = correlations * a;
    return batch_komp(atom_gram, correlations, kii[i].diagonal(), cfg.sparsity, 0.0, cfg.threads);
  };
  for (std::size_t i = 0; i < n_classes; ++i) out.codes.push_back(code(i));
  out.objective.push_back(objective_ikdl(out.grams, out.coefs, out.codes, cfg.gamma));

  for (int it = 1; it <= cfg.iterations; ++it) {
    for (std::size_t i = 0; i < n_classes; ++i) {
      if (cfg.recode_every_iteration && it > 1) out.codes[i] = code(i);
      const Matrix khat = complementary_operator(out.grams, out.coefs, i);
      auto r = ikdl_atom_sweep(kii[i], std::move(out.coefs[i]), khat, std::move(out.codes[i]),
                               cfg.gamma, cfg.mode);
      r.stats.replaced_atoms += replace_unused_atoms(kii[i], r.dict, r.codes, r.error);
      out.stats += r.stats;
      out.coefs[i] = std::move(r.dict);
      out.codes[i] = std::move(r.codes);
    }
    out.objective.push_back(objective_ikdl(out.grams, out.coefs, out.codes, cfg.gamma));
  }
  return out;
}

}  // namespace ikdl
