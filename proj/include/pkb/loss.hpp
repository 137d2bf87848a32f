#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "pkb/errors.hpp"

namespace pkb {

enum class OutcomeType { Regression, Classification, Survival };

inline std::string to_string(OutcomeType t) {
  switch (t) {
    case OutcomeType::Regression: return "regression";
    case OutcomeType::Classification: return "classification";
    case OutcomeType::Survival: return "survival";
  }
  return "unknown";
}

inline OutcomeType parse_outcome_type(const std::string& s) {
  if (s == "regression") return OutcomeType::Regression;
  if (s == "classification") return OutcomeType::Classification;
  if (s == "survival") return OutcomeType::Survival;
  throw UsageError("unknown outcome type '" + s + "'");
}

struct RegressionOutcome {
  Eigen::VectorXd y;
};

/// Labels coded as -1 / +1.
struct ClassificationOutcome {
  Eigen::VectorXd label;
};

/// Observed time and event indicator (1 = event, 0 = censored).
struct SurvivalOutcome {
  Eigen::VectorXd time;
  Eigen::VectorXi event;
};

using Outcome = std::variant<RegressionOutcome, ClassificationOutcome, SurvivalOutcome>;

inline OutcomeType outcome_type(const Outcome& o) { return static_cast<OutcomeType>(o.index()); }

inline Eigen::Index outcome_size(const Outcome& o) {
  return std::visit(
      [](const auto& v) -> Eigen::Index {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, RegressionOutcome>) return v.y.size();
        else if constexpr (std::is_same_v<T, ClassificationOutcome>) return v.label.size();
        else return v.time.size();
      },
      o);
}

inline Outcome subset(const Outcome& o, std::span<const Eigen::Index> rows) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  return std::visit(
      [&](const auto& v) -> Outcome {
        using T = std::decay_t<decltype(v)>;
        T out;
        if constexpr (std::is_same_v<T, RegressionOutcome>) {
          out.y.resize(n);
          for (Eigen::Index i = 0; i < n; ++i) out.y[i] = v.y[rows[i]];
        } else if constexpr (std::is_same_v<T, ClassificationOutcome>) {
          out.label.resize(n);
          for (Eigen::Index i = 0; i < n; ++i) out.label[i] = v.label[rows[i]];
        } else {
          out.time.resize(n);
          out.event.resize(n);
          for (Eigen::Index i = 0; i < n; ++i) {
            out.time[i] = v.time[rows[i]];
            out.event[i] = v.event[rows[i]];
          }
        }
        return out;
      },
      o);
}

/// Shape-tagged Hessian of the empirical loss with respect to F.
struct Hessian {
  enum class Form { ScaledIdentity, Diagonal, Dense };
  Form form = Form::Dense;
  Eigen::Index size = 0;
  double scale = 0.0;         // ScaledIdentity
  Eigen::VectorXd diagonal;   // Diagonal
  Eigen::MatrixXd dense;      // Dense

  static Hessian scaled_identity(Eigen::Index n, double s) {
    Hessian h;
    h.form = Form::ScaledIdentity;
    h.size = n;
    h.scale = s;
    return h;
  }
  static Hessian diag(Eigen::VectorXd d) {
    Hessian h;
    h.form = Form::Diagonal;
    h.size = d.size();
    h.diagonal = std::move(d);
    return h;
  }
  static Hessian full(Eigen::MatrixXd m) {
    Hessian h;
    h.form = Form::Dense;
    h.size = m.rows();
    h.dense = std::move(m);
    return h;
  }

  Eigen::MatrixXd to_dense() const {
    switch (form) {
      case Form::ScaledIdentity: return scale * Eigen::MatrixXd::Identity(size, size);
      case Form::Diagonal: return diagonal.asDiagonal();
      case Form::Dense: return dense;
    }
    return {};
  }

  /// H * x without materialising a dense matrix for the structured forms.
  Eigen::MatrixXd apply(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
    switch (form) {
      case Form::ScaledIdentity: return scale * x;
      case Form::Diagonal: return diagonal.asDiagonal() * x;
      case Form::Dense: return dense * x;
    }
    return {};
  }

  double trace() const {
    switch (form) {
      case Form::ScaledIdentity: return scale * static_cast<double>(size);
      case Form::Diagonal: return diagonal.sum();
      case Form::Dense: return dense.trace();
    }
    return 0.0;
  }
};

struct LossDerivatives {
  Eigen::VectorXd gradient;
  Hessian hessian;
};

namespace detail {

inline void check_scores(const Outcome& o, const Eigen::Ref<const Eigen::VectorXd>& f) {
  if (outcome_size(o) != f.size()) throw DimensionError("score vector length does not match outcome");
  if (f.size() == 0) throw DimensionError("empty outcome");
  if (!f.allFinite()) throw NumericError("score vector has non-finite entries");
}

/// log(1 + exp(-m)), stable for large |m|.
inline double log1p_exp_neg(double m) {
  return m > 0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
}

/// 1 / (1 + exp(m))
inline double logistic_neg(double m) {
  if (m >= 0) {
    const double e = std::exp(-m);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(m));
}

/// Risk-set quantities for the Cox partial likelihood with the "t_j >= t_i"
/// convention (tied times share risk sets). Exponentials are taken after
/// subtracting max(F); all returned ratios are invariant to that shift.
struct CoxRiskSets {
  Eigen::VectorXd expF;     // exp(F_i - max F)
  Eigen::VectorXd riskSum;  // S_i = sum_{j: t_j >= t_i} expF_j
  Eigen::VectorXd a;        // a_i = sum_{l: event, t_l <= t_i} 1 / S_l
  Eigen::VectorXd c;        // c_i = sum_{l: event, t_l <= t_i} 1 / S_l^2
  double shift = 0.0;
};

inline CoxRiskSets cox_risk_sets(const SurvivalOutcome& s, const Eigen::Ref<const Eigen::VectorXd>& f) {
  const Eigen::Index n = f.size();
  CoxRiskSets r;
  r.shift = f.maxCoeff();
  r.expF = (f.array() - r.shift).exp();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index x, Eigen::Index y) { return s.time[x] > s.time[y]; });

  r.riskSum.resize(n);
  double running = 0.0;
  for (std::size_t k = 0; k < order.size();) {
    std::size_t end = k;
    while (end < order.size() && s.time[order[end]] == s.time[order[k]]) running += r.expF[order[end++]];
    for (std::size_t q = k; q < end; ++q) r.riskSum[order[q]] = running;
    k = end;
  }

  r.a.resize(n);
  r.c.resize(n);
  double accA = 0.0, accC = 0.0;
  for (std::size_t k = order.size(); k > 0;) {
    std::size_t begin = k;
    const double t = s.time[order[k - 1]];
    while (begin > 0 && s.time[order[begin - 1]] == t) {
      const Eigen::Index i = order[begin - 1];
      if (s.event[i] == 1) {
        accA += 1.0 / r.riskSum[i];
        accC += 1.0 / (r.riskSum[i] * r.riskSum[i]);
      }
      --begin;
    }
    for (std::size_t q = begin; q < k; ++q) {
      r.a[order[q]] = accA;
      r.c[order[q]] = accC;
    }
    k = begin;
  }
  return r;
}

inline void check_survival(const SurvivalOutcome& s) {
  if (s.event.size() != s.time.size()) throw DimensionError("survival time and status lengths differ");
  bool anyEvent = false;
  for (Eigen::Index i = 0; i < s.time.size(); ++i) {
    if (s.event[i] != 0 && s.event[i] != 1) throw DataError("survival status must be 0 or 1");
    if (!(s.time[i] > 0.0) || !std::isfinite(s.time[i])) throw DataError("survival times must be positive");
    anyEvent = anyEvent || s.event[i] == 1;
  }
  if (!anyEvent) throw DegenerateError("survival outcome has no events");
}

}  // namespace detail

/// Mean per-sample loss: squared error, log loss, or negative log partial
/// likelihood depending on the outcome type.
inline double empirical_loss(const Outcome& outcome, const Eigen::Ref<const Eigen::VectorXd>& f) {
  detail::check_scores(outcome, f);
  const double n = static_cast<double>(f.size());
  return std::visit(
      [&](const auto& o) -> double {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, RegressionOutcome>) {
          return (o.y - f).squaredNorm() / n;
        } else if constexpr (std::is_same_v<T, ClassificationOutcome>) {
          double acc = 0.0;
          for (Eigen::Index i = 0; i < f.size(); ++i) acc += detail::log1p_exp_neg(o.label[i] * f[i]);
          return acc / n;
        } else {
          detail::check_survival(o);
          const auto r = detail::cox_risk_sets(o, f);
          double acc = 0.0;
          for (Eigen::Index i = 0; i < f.size(); ++i)
            if (o.event[i] == 1) acc -= (f[i] - r.shift) - std::log(r.riskSum[i]);
          return acc / n;
        }
      },
      outcome);
}

/// Gradient and Hessian of `empirical_loss` at F.
inline LossDerivatives derivatives(const Outcome& outcome, const Eigen::Ref<const Eigen::VectorXd>& f) {
  detail::check_scores(outcome, f);
  const Eigen::Index n = f.size();
  const double invN = 1.0 / static_cast<double>(n);
  return std::visit(
      [&](const auto& o) -> LossDerivatives {
        using T = std::decay_t<decltype(o)>;
        LossDerivatives d;
        if constexpr (std::is_same_v<T, RegressionOutcome>) {
          d.gradient = -2.0 * invN * (o.y - f);
          d.hessian = Hessian::scaled_identity(n, 2.0 * invN);
        } else if constexpr (std::is_same_v<T, ClassificationOutcome>) {
          d.gradient.resize(n);
          Eigen::VectorXd h(n);
          for (Eigen::Index i = 0; i < n; ++i) {
            const double m = o.label[i] * f[i];
            const double q = detail::logistic_neg(m);   // 1/(1+e^m)
            const double p = detail::logistic_neg(-m);  // e^m/(1+e^m)
            d.gradient[i] = -o.label[i] * q * invN;
            h[i] = p * q * invN;
          }
          d.hessian = Hessian::diag(std::move(h));
        } else {
          detail::check_survival(o);
          const auto r = detail::cox_risk_sets(o, f);
          d.gradient.resize(n);
          for (Eigen::Index i = 0; i < n; ++i)
            d.gradient[i] = -invN * (static_cast<double>(o.event[i]) - r.expF[i] * r.a[i]);
          Eigen::MatrixXd h(n, n);
          for (Eigen::Index j = 0; j < n; ++j) {
            for (Eigen::Index i = j; i < n; ++i) {
              const double cmin = std::min(r.c[i], r.c[j]);
              double v = -r.expF[i] * r.expF[j] * cmin;
              if (i == j) v += r.expF[i] * r.a[i];
              h(i, j) = h(j, i) = invN * v;
            }
          }
          d.hessian = Hessian::full(std::move(h));
        }
        return d;
      },
      outcome);
}

}  // namespace pkb
