#include "ikdl/kernel.hpp"

#include "ikdl/error.hpp"

#include <algorithm>
#include <cmath>
#include <thread>
#include <vector>

namespace ikdl {

namespace {

bool all_finite(const Eigen::Ref<const Vector>& v) { return v.allFinite(); }

double sequential_dot(const double* x, const double* y, Eigen::Index n) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

double sequential_sqdist(const double* x, const double* y, Eigen::Index n) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = x[i] - y[i];
    acc += d * d;
  }
  return acc;
}

double eval_raw(const KernelSpec& spec, const double* x, const double* y, Eigen::Index n) {
  switch (spec.kind) {
    case KernelKind::Linear:
      return sequential_dot(x, y, n);
    case KernelKind::RBF:
      return std::exp(-sequential_sqdist(x, y, n) / (2.0 * spec.sigma * spec.sigma));
    case KernelKind::Polynomial:
      return std::pow(sequential_dot(x, y, n) + spec.alpha, spec.beta);
  }
  return 0.0;
}

}  // namespace

void KernelSpec::validate() const {
  if (kind == KernelKind::RBF && !(sigma > 0.0 && std::isfinite(sigma)))
    throw InputError("RBF kernel requires sigma > 0");
  if (kind == KernelKind::Polynomial) {
    if (beta < 1) throw InputError("polynomial kernel requires beta >= 1");
    if (!std::isfinite(alpha)) throw InputError("polynomial kernel alpha must be finite");
  }
}

std::string to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::Linear: return "linear";
    case KernelKind::RBF: return "rbf";
    case KernelKind::Polynomial: return "polynomial";
  }
  return "unknown";
}

KernelKind parse_kernel_kind(const std::string& name) {
  if (name == "linear") return KernelKind::Linear;
  if (name == "rbf") return KernelKind::RBF;
  if (name == "polynomial" || name == "poly") return KernelKind::Polynomial;
  throw InputError("unknown kernel kind '" + name + "'");
}

std::string describe(const KernelSpec& spec) {
  auto num = [](double v) {
    std::string s = std::to_string(v);
    s.erase(s.find_last_not_of('0') + 1);
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s;
  };
  switch (spec.kind) {
    case KernelKind::Linear: return "linear";
    case KernelKind::RBF: return "rbf(sigma=" + num(spec.sigma) + ")";
    case KernelKind::Polynomial:
      return "polynomial(alpha=" + num(spec.alpha) + ";beta=" + std::to_string(spec.beta) + ")";
  }
  return "unknown";
}

double kernel_eval(const KernelSpec& spec, const Eigen::Ref<const Vector>& x,
                   const Eigen::Ref<const Vector>& y) {
  spec.validate();
  if (x.size() != y.size()) throw InputError("kernel_eval: dimension mismatch");
  if (!all_finite(x) || !all_finite(y)) throw InputError("kernel_eval: non-finite input");
  return eval_raw(spec, x.data(), y.data(), x.size());
}

GramMatrix gram(const KernelSpec& spec, const Matrix& a, const Matrix& b, int threads) {
  spec.validate();
  if (a.rows() != b.rows()) throw InputError("gram: signal dimension mismatch");
  if (!a.allFinite() || !b.allFinite()) throw InputError("gram: non-finite input");

  const bool same = (&a == &b) || (a.cols() == b.cols() && a == b);
  GramMatrix g{Matrix(a.cols(), b.cols()), spec, same};
  const Eigen::Index m = a.rows();

  auto fill = [&](Eigen::Index col_begin, Eigen::Index col_end) {
    for (Eigen::Index j = col_begin; j < col_end; ++j) {
      const double* bj = b.col(j).data();
      const Eigen::Index i_begin = same ? j : 0;
      for (Eigen::Index i = i_begin; i < a.cols(); ++i)
        g.entries(i, j) = eval_raw(spec, a.col(i).data(), bj, m);
    }
  };

  const Eigen::Index cols = b.cols();
  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(cols)));
  if (workers == 1) {
    fill(0, cols);
  } else {
    std::vector<std::thread> pool;
    const Eigen::Index chunk = (cols + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      const Eigen::Index lo = w * chunk, hi = std::min(cols, lo + chunk);
      if (lo < hi) pool.emplace_back(fill, lo, hi);
    }
    for (auto& t : pool) t.join();
  }

  if (same) {
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < j; ++i) g.entries(i, j) = g.entries(j, i);
  }
  return g;
}

GramMatrix gram(const KernelSpec& spec, const Matrix& a, int threads) {
  return gram(spec, a, a, threads);
}

Vector kernel_column(const KernelSpec& spec, const Matrix& signals,
                     const Eigen::Ref<const Vector>& y) {
  spec.validate();
  if (signals.rows() != y.size()) throw InputError("kernel_column: dimension mismatch");
  if (!y.allFinite()) throw InputError("kernel_column: non-finite input");
  const Vector yc = y;
  Vector out(signals.cols());
  for (Eigen::Index i = 0; i < signals.cols(); ++i)
    out(i) = eval_raw(spec, signals.col(i).data(), yc.data(), yc.size());
  return out;
}

double knorm(const Eigen::Ref<const Vector>& a, const Matrix& k) {
  const double q = a.dot(k * a);
  return std::sqrt(std::max(q, 0.0));
}

double psd_jitter(const Matrix& k) {
  if (k.rows() == 0) return 0.0;
  return 1e-10 * std::abs(k.trace()) / static_cast<double>(k.rows());
}

bool spd_solve(const Matrix& system, const Vector& rhs, Vector& solution) {
  constexpr double kPivotFloor = 1e-12;
  auto attempt = [&](double shift) {
    Matrix g = system;
    g.diagonal().array() += shift;
    Eigen::LLT<Matrix> llt(g);
    if (llt.info() != Eigen::Success) return false;
    const Matrix factor = llt.matrixL();
    for (Eigen::Index k = 0; k < factor.rows(); ++k) {
      const double scale = std::max(std::abs(g(k, k)), 1e-300);
      if (factor(k, k) * factor(k, k) <= kPivotFloor * scale) return false;
    }
    solution = llt.solve(rhs);
    return solution.allFinite();
  };
  if (attempt(0.0)) return true;
  const double shift = psd_jitter(system);
  return shift > 0.0 && attempt(shift);
}

}  // namespace ikdl
