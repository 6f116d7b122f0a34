#include "ikdl/classifier.hpp"

#include "ikdl/error.hpp"
#include "ikdl/sparse_coding.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <string>
#include <thread>

namespace ikdl {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::size_t argmin_lowest(const Vector& v) {
  std::size_t best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v(i) < v(static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(i);
  return best;
}

// Squared residual of y against every class.
Vector squared_residuals(const Eigen::Ref<const Vector>& y, const ClassifierModel& model) {
  if (y.size() != model.dim)
    throw InputError("signal has dimension " + std::to_string(y.size()) + ", model expects " +
                     std::to_string(model.dim));
  if (!y.allFinite()) throw InputError("signal contains non-finite values");
  const auto n_classes = static_cast<Eigen::Index>(model.classes());
  Vector res(n_classes);
  const int s = model.cfg.sparsity;
  if (model.kind == ModelKind::Linear) {
    for (Eigen::Index i = 0; i < n_classes; ++i)
      res(i) = omp(model.dicts[static_cast<std::size_t>(i)].atoms, y, s).residual_sq;
  } else {
    const KernelSpec& spec = *model.cfg.kernel;
    const Vector yv = y;
    const double kyy = kernel_eval(spec, yv, yv);
    for (Eigen::Index i = 0; i < n_classes; ++i) {
      const auto& kc = model.kernel_classes[static_cast<std::size_t>(i)];
      const Vector p = kc.coefs.coefs.transpose() * kernel_column(spec, kc.signals, yv);
      res(i) = komp(kc.atom_gram, p, kyy, s).residual_sq;
    }
  }
  return res;
}

template <typename Fn>
void parallel_for(Eigen::Index count, int threads, Fn&& fn) {
  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(count)));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  auto run = [&](Eigen::Index lo, Eigen::Index hi, std::exception_ptr& err) {
    try {
      for (Eigen::Index l = lo; l < hi; ++l) fn(l);
    } catch (...) {
      err = std::current_exception();
    }
  };
  if (workers == 1) {
    run(0, count, errors[0]);
  } else {
    std::vector<std::thread> pool;
    const Eigen::Index chunk = (count + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      const Eigen::Index lo = w * chunk, hi = std::min(count, lo + chunk);
      if (lo < hi) pool.emplace_back(run, lo, hi, std::ref(errors[static_cast<std::size_t>(w)]));
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

void ClassifierModel::validate() const {
  if (classes() == 0) throw InputError("model has no classes");
  if (labels.size() != classes()) throw InputError("model label count mismatch");
  if (kind == ModelKind::Kernel && !cfg.kernel) throw InputError("kernel model without kernel spec");
  if (kind == ModelKind::Linear && cfg.kernel) throw InputError("linear model with kernel spec");
  for (std::size_t i = 0; i < classes(); ++i) {
    if (kind == ModelKind::Linear) {
      const auto& d = dicts[i].atoms;
      if (d.rows() != dim || d.cols() != cfg.n_atoms)
        throw InputError("dictionary " + std::to_string(i) + " has wrong shape");
    } else {
      const auto& kc = kernel_classes[i];
      if (kc.signals.rows() != dim || kc.coefs.coefs.rows() != kc.signals.cols() ||
          kc.coefs.coefs.cols() != cfg.n_atoms)
        throw InputError("kernel class " + std::to_string(i) + " has wrong shape");
    }
  }
}

ClassifierModel make_kernel_model(const TrainConfig& cfg, std::vector<std::int64_t> labels,
                                  std::vector<CoefDictionary> coefs, std::vector<Matrix> signals) {
  if (!cfg.kernel) throw InputError("make_kernel_model: configuration has no kernel");
  if (coefs.size() != signals.size()) throw InputError("make_kernel_model: class count mismatch");
  ClassifierModel model;
  model.kind = ModelKind::Kernel;
  model.cfg = cfg;
  model.labels = std::move(labels);
  model.dim = signals.empty() ? 0 : signals[0].rows();
  for (std::size_t i = 0; i < coefs.size(); ++i) {
    KernelClass kc;
    kc.coefs = std::move(coefs[i]);
    kc.signals = std::move(signals[i]);
    kc.gram = gram(*cfg.kernel, kc.signals, cfg.threads).entries;
    kc.atom_gram = kc.coefs.coefs.transpose() * kc.gram * kc.coefs.coefs;
    model.kernel_classes.push_back(std::move(kc));
  }
  model.validate();
  return model;
}

ClassifierModel train(const std::vector<Matrix>& classes, const TrainConfig& cfg,
                      std::vector<std::int64_t> labels) {
  if (classes.empty()) throw InputError("train: no classes");
  if (labels.empty()) {
    labels.resize(classes.size());
    std::iota(labels.begin(), labels.end(), std::int64_t{0});
  }
  if (labels.size() != classes.size()) throw InputError("train: label count mismatch");

  const auto start = Clock::now();
  ClassifierModel model;
  if (!cfg.kernel) {
    auto result = train_idl(classes, cfg);
    model.kind = ModelKind::Linear;
    model.cfg = cfg;
    model.labels = std::move(labels);
    model.dim = classes[0].rows();
    model.dicts = std::move(result.dicts);
    model.objective = std::move(result.objective);
    model.validate();
  } else {
    auto result = train_ikdl(classes, cfg);
    ClassifierModel km;
    km.kind = ModelKind::Kernel;
    km.cfg = cfg;
    km.labels = std::move(labels);
    km.dim = classes[0].rows();
    for (std::size_t i = 0; i < classes.size(); ++i) {
      KernelClass kc;
      kc.coefs = std::move(result.coefs[i]);
      kc.signals = classes[i];
      kc.gram = result.grams.class_gram(i);
      kc.atom_gram = kc.coefs.coefs.transpose() * kc.gram * kc.coefs.coefs;
      km.kernel_classes.push_back(std::move(kc));
    }
    km.objective = std::move(result.objective);
    km.validate();
    model = std::move(km);
  }
  model.train_time_s = seconds_since(start);
  return model;
}

Decision classify_linear(const Eigen::Ref<const Vector>& y, const ClassifierModel& model) {
  if (model.kind != ModelKind::Linear) throw InputError("classify_linear: model is not linear");
  const Vector sq = squared_residuals(y, model);
  return {argmin_lowest(sq), sq.cwiseSqrt()};
}

Decision classify_kernel(const Eigen::Ref<const Vector>& y, const ClassifierModel& model) {
  if (model.kind != ModelKind::Kernel) throw InputError("classify_kernel: model is not a kernel model");
  Vector sq = squared_residuals(y, model);
  return {argmin_lowest(sq), std::move(sq)};
}

Decision classify(const Eigen::Ref<const Vector>& y, const ClassifierModel& model) {
  return model.kind == ModelKind::Linear ? classify_linear(y, model) : classify_kernel(y, model);
}

EvalReport evaluate(const std::vector<Matrix>& test_classes, const ClassifierModel& model,
                    int threads) {
  if (test_classes.size() != model.classes())
    throw InputError("evaluate: test set has " + std::to_string(test_classes.size()) +
                     " classes, model has " + std::to_string(model.classes()));
  EvalReport report;
  for (std::size_t i = 0; i < test_classes.size(); ++i)
    for (Eigen::Index l = 0; l < test_classes[i].cols(); ++l) report.truth.push_back(i);
  if (report.truth.empty()) throw InputError("evaluate: empty test set");

  Matrix all(model.dim, static_cast<Eigen::Index>(report.truth.size()));
  Eigen::Index at = 0;
  for (const auto& c : test_classes) {
    if (c.rows() != model.dim && c.cols() > 0) throw InputError("evaluate: dimension mismatch");
    all.middleCols(at, c.cols()) = c;
    at += c.cols();
  }

  const auto start = Clock::now();
  report.predictions.assign(report.truth.size(), 0);
  parallel_for(all.cols(), threads, [&](Eigen::Index l) {
    report.predictions[static_cast<std::size_t>(l)] = argmin_lowest(squared_residuals(all.col(l), model));
  });
  report.test_time_s = seconds_since(start);

  const auto n_classes = static_cast<Eigen::Index>(model.classes());
  report.confusion.setZero(n_classes, n_classes);
  for (std::size_t l = 0; l < report.truth.size(); ++l)
    ++report.confusion(static_cast<Eigen::Index>(report.truth[l]),
                       static_cast<Eigen::Index>(report.predictions[l]));
  report.accuracy = static_cast<double>(report.confusion.trace()) /
                    static_cast<double>(report.confusion.sum());
  report.train_time_s = model.train_time_s;
  report.per_iteration_objective = model.objective;
  return report;
}

Matrix error_matrix(const Matrix& test_signals, const ClassifierModel& model, int threads) {
  Matrix out(test_signals.cols(), static_cast<Eigen::Index>(model.classes()));
  parallel_for(test_signals.cols(), threads, [&](Eigen::Index l) {
    out.row(l) = squared_residuals(test_signals.col(l), model).transpose();
  });
  return out;
}

Matrix discriminative_matrix(const ClassifierModel& model) {
  const auto n_classes = static_cast<Eigen::Index>(model.classes());
  Matrix out(n_classes, n_classes);
  for (Eigen::Index i = 0; i < n_classes; ++i) {
    for (Eigen::Index l = 0; l < n_classes; ++l) {
      const auto si = static_cast<std::size_t>(i), sl = static_cast<std::size_t>(l);
      if (model.kind == ModelKind::Linear) {
        out(i, l) = (model.dicts[sl].atoms.transpose() * model.dicts[si].atoms).squaredNorm();
      } else {
        const auto& ci = model.kernel_classes[si];
        const auto& cl = model.kernel_classes[sl];
        // K_il = gram(Y_l, Y_i)
        const Matrix k_il = gram(*model.cfg.kernel, cl.signals, ci.signals).entries;
        out(i, l) = (cl.coefs.coefs.transpose() * k_il * ci.coefs.coefs).squaredNorm();
      }
    }
  }
  return out;
}

}  // namespace ikdl
