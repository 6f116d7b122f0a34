#pragma once

#include "ikdl/kernel.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ikdl {

// Representation update rule used after each atom update.
//   AKSVD:  x = F' K a           (error block built with the previous atom)
//   UAKSVD: x = E_I' K a + x_old (equivalent to rebuilding F with the new atom)
enum class UpdateMode { AKSVD, UAKSVD };

std::string to_string(UpdateMode mode);
UpdateMode parse_update_mode(const std::string& name);

struct TrainConfig {
  int n_atoms = 40;
  int sparsity = 20;
  int iterations = 10;
  double gamma = 0.0;
  UpdateMode mode = UpdateMode::UAKSVD;
  std::optional<KernelSpec> kernel;
  std::uint64_t seed = 0;
  bool recode_every_iteration = true;
  // Worker threads for sparse coding and Gram construction. Results do not depend on it.
  int threads = 1;

  void validate() const;
};

// m x n, unit-norm columns.
struct Dictionary {
  Matrix atoms;
};

// N_i x n coefficients; atom j is phi(Y_i) * coefs.col(j) with unit feature-space norm.
struct CoefDictionary {
  Matrix coefs;
};

struct SweepStats {
  int skipped_atoms = 0;   // empty support during the sweep
  int collapsed_atoms = 0; // norm vanished after the update, reinitialized
  int replaced_atoms = 0;  // replaced by replace_unused_* after the sweep

  SweepStats& operator+=(const SweepStats& o) {
    skipped_atoms += o.skipped_atoms;
    collapsed_atoms += o.collapsed_atoms;
    replaced_atoms += o.replaced_atoms;
    return *this;
  }
};

// Gram matrix over the concatenation of all training classes, with views of
// the per-class blocks. Convention: cross(i, l) = K_il = gram(Y_l, Y_i), shape N_l x N_i.
struct ClassGrams {
  KernelSpec spec;
  Matrix full;
  std::vector<Eigen::Index> offsets;
  std::vector<Eigen::Index> sizes;

  std::size_t classes() const { return sizes.size(); }
  Matrix class_gram(std::size_t i) const { return cross(i, i); }
  Matrix cross(std::size_t i, std::size_t l) const {
    return full.block(offsets[l], offsets[i], sizes[l], sizes[i]);
  }
};

ClassGrams build_class_grams(const KernelSpec& spec, const std::vector<Matrix>& classes,
                             int threads = 1);

// n distinct seeded training columns, normalized. When the class has fewer
// than n usable columns the rest are seeded Gaussian unit vectors.
Dictionary init_dictionary(const Matrix& signals, int n_atoms, std::uint64_t seed);

// One-hot columns at distinct seeded indices scaled to unit kernel norm. The
// index draw matches init_dictionary for the same seed, so with a linear
// kernel Y * A reproduces the linear initialization.
CoefDictionary init_coef_dictionary(const Matrix& class_gram, int n_atoms, std::uint64_t seed);

// Horizontal concatenation of every dictionary except `skip`.
Matrix complementary_dictionary(const std::vector<Dictionary>& dicts, std::size_t skip);

// Khat_i: vertical stack of A_l' K_il over l != i. Shape (sum n_l) x N_i.
Matrix complementary_operator(const ClassGrams& grams, const std::vector<CoefDictionary>& coefs,
                              std::size_t i);

struct LinearSweepResult {
  Dictionary dict;
  Matrix codes;
  Matrix error;  // Y - D X
  SweepStats stats;
};

// One incoherent AK-SVD pass over all atoms of one class dictionary.
// `complement` may have zero columns.
LinearSweepResult idl_atom_sweep(const Matrix& signals, Dictionary dict, const Matrix& complement,
                                 Matrix codes, double gamma, UpdateMode mode);

struct KernelSweepResult {
  CoefDictionary dict;
  Matrix codes;
  Matrix error;  // I - A X
  SweepStats stats;
};

// One incoherent kernel AK-SVD / UAK-SVD pass. `khat` may have zero rows.
KernelSweepResult ikdl_atom_sweep(const Matrix& class_gram, CoefDictionary dict, const Matrix& khat,
                                  Matrix codes, double gamma, UpdateMode mode);

// One power-method step on H = K F F' K - 2 gamma Khat' Khat with the
// representation x standing in for F' K a:  K F x - 2 gamma (Khat' Khat) a.
Vector atom_power_step(const Matrix& class_gram, const Matrix& f, const Vector& x,
                       const Matrix& penalty, double gamma, const Vector& atom);

// Exact minimizer of the single-atom kernel problem:
// (K |x|^2 + 2 gamma Khat' Khat) a = K F x. Test oracle only.
Vector exact_atom_solve(const Matrix& class_gram, const Matrix& f, const Vector& x, double gamma,
                        const Matrix& khat);

// Replaces atoms with an all-zero code row by the signal with the largest
// residual norm (distinct signals for distinct atoms). Returns the count.
int replace_unused_atoms(const Matrix& signals, Dictionary& dict, const Matrix& codes,
                         const Matrix& error);
int replace_unused_atoms(const Matrix& class_gram, CoefDictionary& dict, const Matrix& codes,
                         const Matrix& error);

double objective_idl(const std::vector<Matrix>& classes, const std::vector<Dictionary>& dicts,
                     const std::vector<Matrix>& codes, double gamma);
double objective_ikdl(const ClassGrams& grams, const std::vector<CoefDictionary>& coefs,
                      const std::vector<Matrix>& codes, double gamma);

struct LinearTrainResult {
  std::vector<Dictionary> dicts;
  std::vector<Matrix> codes;
  // Entry 0 is the initial state, entry k the state after iteration k.
  std::vector<double> objective;
  SweepStats stats;
};

struct KernelTrainResult {
  std::vector<CoefDictionary> coefs;
  std::vector<Matrix> codes;
  ClassGrams grams;
  std::vector<double> objective;
  SweepStats stats;
};

// `initial` overrides the seeded initialization when non-empty.
LinearTrainResult train_idl(const std::vector<Matrix>& classes, const TrainConfig& cfg,
                            std::vector<Dictionary> initial = {});
KernelTrainResult train_ikdl(const std::vector<Matrix>& classes, const TrainConfig& cfg,
                             std::vector<CoefDictionary> initial = {});

}  // namespace ikdl
