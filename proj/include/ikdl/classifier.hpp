#pragma once

#include "ikdl/dict_learning.hpp"

#include <cstdint>
#include <vector>

namespace ikdl {

enum class ModelKind { Linear, Kernel };

// Everything the kernel residual needs at test time for one class.
struct KernelClass {
  CoefDictionary coefs;
  Matrix signals;    // Y_i, needed for k(Y_i, y)
  Matrix gram;       // K_ii
  Matrix atom_gram;  // A' K_ii A
};

struct ClassifierModel {
  ModelKind kind = ModelKind::Linear;
  TrainConfig cfg;
  // Original class id of each dictionary, in dictionary order.
  std::vector<std::int64_t> labels;
  Eigen::Index dim = 0;
  std::vector<Dictionary> dicts;            // Linear
  std::vector<KernelClass> kernel_classes;  // Kernel
  std::vector<double> objective;
  // Wall-clock seconds spent in training. Not persisted with the model.
  double train_time_s = 0.0;

  std::size_t classes() const {
    return kind == ModelKind::Linear ? dicts.size() : kernel_classes.size();
  }
  // Throws InputError on inconsistent shapes.
  void validate() const;
};

// Builds a Kernel model from per-class coefficients and signals, filling the cached Grams.
ClassifierModel make_kernel_model(const TrainConfig& cfg, std::vector<std::int64_t> labels,
                                  std::vector<CoefDictionary> coefs, std::vector<Matrix> signals);

// Linear model when cfg.kernel is empty, Kernel model otherwise. `labels`
// defaults to 0..C-1.
ClassifierModel train(const std::vector<Matrix>& classes, const TrainConfig& cfg,
                      std::vector<std::int64_t> labels = {});

// Index into model.classes() plus the per-class residuals.
struct Decision {
  std::size_t class_index = 0;
  Vector residuals;
};

// Residuals are reconstruction norms |y - D_i x_i|.
Decision classify_linear(const Eigen::Ref<const Vector>& y, const ClassifierModel& model);
// Residuals are squared feature-space distances, clamped at zero.
Decision classify_kernel(const Eigen::Ref<const Vector>& y, const ClassifierModel& model);
Decision classify(const Eigen::Ref<const Vector>& y, const ClassifierModel& model);

struct EvalReport {
  double accuracy = 0.0;
  double train_time_s = 0.0;
  double test_time_s = 0.0;
  // confusion(true, predicted)
  Eigen::Matrix<long, Eigen::Dynamic, Eigen::Dynamic> confusion;
  std::vector<double> per_iteration_objective;
  std::vector<std::size_t> truth;
  std::vector<std::size_t> predictions;
};

// test_classes[i] holds the test signals of model class i.
EvalReport evaluate(const std::vector<Matrix>& test_classes, const ClassifierModel& model,
                    int threads = 1);

// N_test x C squared residuals.
Matrix error_matrix(const Matrix& test_signals, const ClassifierModel& model, int threads = 1);

// C x C, entry (i, l) = |A_l' K_il A_i|_F^2 (|D_l' D_i|_F^2 for linear models).
Matrix discriminative_matrix(const ClassifierModel& model);

}  // namespace ikdl
