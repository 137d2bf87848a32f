#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>

#include "pkb/errors.hpp"

namespace pkb {

inline double mse(const Eigen::Ref<const Eigen::VectorXd>& y, const Eigen::Ref<const Eigen::VectorXd>& yhat) {
  if (y.size() != yhat.size()) throw DimensionError("mse: length mismatch");
  if (y.size() == 0) throw DimensionError("mse: empty input");
  return (y - yhat).squaredNorm() / static_cast<double>(y.size());
}

/// Fraction of samples whose predicted probability of the +1 class falls on
/// the wrong side of 0.5. Labels are -1/+1.
inline double classification_error(const Eigen::Ref<const Eigen::VectorXd>& label,
                                   const Eigen::Ref<const Eigen::VectorXd>& prob) {
  if (label.size() != prob.size()) throw DimensionError("classification_error: length mismatch");
  if (label.size() == 0) throw DimensionError("classification_error: empty input");
  Eigen::Index wrong = 0;
  for (Eigen::Index i = 0; i < label.size(); ++i)
    if ((prob[i] > 0.5) != (label[i] > 0)) ++wrong;
  return static_cast<double>(wrong) / static_cast<double>(label.size());
}

/// Mean negative log-likelihood of -1/+1 labels under probabilities of +1.
inline double log_loss(const Eigen::Ref<const Eigen::VectorXd>& label, const Eigen::Ref<const Eigen::VectorXd>& prob,
                       double eps = 1e-15) {
  if (label.size() != prob.size()) throw DimensionError("log_loss: length mismatch");
  if (label.size() == 0) throw DimensionError("log_loss: empty input");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < label.size(); ++i) {
    const double p = std::clamp(prob[i], eps, 1.0 - eps);
    acc -= label[i] > 0 ? std::log(p) : std::log1p(-p);
  }
  return acc / static_cast<double>(label.size());
}

struct ConcordanceResult {
  double concordance = 0.0;
  std::int64_t permissiblePairs = 0;
  double cIndex = 0.0;
};

/// Harrell-type concordance with explicit handling of tied times and risks.
/// Higher risk is expected to go with shorter survival.
inline ConcordanceResult c_index(const Eigen::Ref<const Eigen::VectorXd>& time, const Eigen::Ref<const Eigen::VectorXi>& event,
                                 const Eigen::Ref<const Eigen::VectorXd>& risk) {
  const Eigen::Index n = time.size();
  if (event.size() != n || risk.size() != n) throw DimensionError("c_index: length mismatch");
  if (n < 2) throw DimensionError("c_index: at least two samples are required");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(time[i] > 0.0)) throw DataError("c_index: times must be positive");
    if (event[i] != 0 && event[i] != 1) throw DataError("c_index: status must be 0 or 1");
  }

  ConcordanceResult r;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (time[i] != time[j]) {
        const Eigen::Index early = time[i] < time[j] ? i : j;
        const Eigen::Index late = early == i ? j : i;
        if (event[early] == 0) continue;
        ++r.permissiblePairs;
        if (risk[early] == risk[late]) r.concordance += 0.5;
        else if (risk[early] > risk[late]) r.concordance += 1.0;
      } else if (event[i] == 1 && event[j] == 1) {
        ++r.permissiblePairs;
        r.concordance += risk[i] == risk[j] ? 1.0 : 0.5;
      } else if (event[i] == 1 || event[j] == 1) {
        ++r.permissiblePairs;
        const Eigen::Index censored = event[i] == 0 ? i : j;
        const Eigen::Index died = censored == i ? j : i;
        if (risk[censored] < risk[died]) r.concordance += 1.0;
      }
    }
  }
  if (r.permissiblePairs == 0) throw UndefinedMetricError("c_index: no permissible pairs");
  r.cIndex = r.concordance / static_cast<double>(r.permissiblePairs);
  return r;
}

}  // namespace pkb
