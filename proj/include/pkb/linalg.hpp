#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "pkb/errors.hpp"
#include "pkb/loss.hpp"

namespace pkb {

/// Symmetric square root via eigendecomposition; negative eigenvalues are clamped to 0.
inline Eigen::MatrixXd symmetric_sqrt(const Eigen::Ref<const Eigen::MatrixXd>& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  if (es.info() != Eigen::Success) throw NumericError("eigendecomposition failed");
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

/// A Hessian made safely invertible. The matrix is used as is when its
/// Cholesky pivots are well separated from zero; otherwise eps*(trace/N)*I is
/// added with eps = 1e-8, escalating x10 up to 1e-4.
class ConditionedHessian {
 public:
  static constexpr double kPivotRatio = 1e-12;
  static constexpr double kFirstJitter = 1e-8;
  static constexpr double kLastJitter = 1e-4;

  explicit ConditionedHessian(Hessian h) : h_(std::move(h)) {
    const Eigen::Index n = h_.size;
    if (n == 0) throw DimensionError("empty Hessian");
    const double meanDiag = h_.trace() / static_cast<double>(n);
    if (!(meanDiag > 0.0) || !std::isfinite(meanDiag))
      throw IllConditionedError("Hessian has non-positive trace");

    if (try_factor(0.0)) return;
    for (double eps = kFirstJitter; eps <= kLastJitter * 1.0000001; eps *= 10.0)
      if (try_factor(eps * meanDiag)) {
        jitter_ = eps;
        return;
      }
    throw IllConditionedError("Hessian could not be factorized even with jitter 1e-4");
  }

  const Hessian& hessian() const { return h_; }
  /// Relative jitter applied (0 when none was needed).
  double jitter() const { return jitter_; }
  Eigen::Index size() const { return h_.size; }

  Eigen::MatrixXd apply(const Eigen::Ref<const Eigen::MatrixXd>& x) const { return h_.apply(x); }

  Eigen::MatrixXd solve(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
    switch (h_.form) {
      case Hessian::Form::ScaledIdentity: return x / h_.scale;
      case Hessian::Form::Diagonal: return h_.diagonal.cwiseInverse().asDiagonal() * x;
      case Hessian::Form::Dense: return llt_.solve(x);
    }
    return {};
  }

  Eigen::MatrixXd sqrt() const {
    switch (h_.form) {
      case Hessian::Form::ScaledIdentity:
        return std::sqrt(h_.scale) * Eigen::MatrixXd::Identity(h_.size, h_.size);
      case Hessian::Form::Diagonal: return h_.diagonal.cwiseSqrt().asDiagonal();
      case Hessian::Form::Dense: return symmetric_sqrt(h_.dense);
    }
    return {};
  }

 private:
  bool try_factor(double add) {
    switch (h_.form) {
      case Hessian::Form::ScaledIdentity:
        if (add == 0.0) return h_.scale > 0.0;
        h_.scale += add;
        return h_.scale > 0.0;
      case Hessian::Form::Diagonal: {
        Eigen::VectorXd d = h_.diagonal.array() + add;
        const double lo = d.minCoeff(), hi = d.maxCoeff();
        const bool ok = add == 0.0 ? lo >= kPivotRatio * hi && lo > 0.0 : lo > 0.0;
        if (ok) h_.diagonal = std::move(d);
        return ok;
      }
      case Hessian::Form::Dense: {
        Eigen::MatrixXd m = h_.dense;
        m.diagonal().array() += add;
        Eigen::LLT<Eigen::MatrixXd> llt(m);
        if (llt.info() != Eigen::Success) return false;
        const Eigen::VectorXd piv = Eigen::MatrixXd(llt.matrixL()).diagonal().array().square();
        const double lo = piv.minCoeff(), hi = piv.maxCoeff();
        const bool ok = add == 0.0 ? lo >= kPivotRatio * hi && lo > 0.0 : lo > 0.0;
        if (ok) {
          h_.dense = std::move(m);
          llt_ = std::move(llt);
        }
        return ok;
      }
    }
    return false;
  }

  Hessian h_;
  double jitter_ = 0.0;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

/// The oblique projector U = I - Z (Z'HZ)^{-1} Z'H that removes the clinical
/// component of a direction under the H-inner product. With no clinical
/// columns U is the identity.
class ClinicalProjector {
 public:
  ClinicalProjector(const Eigen::Ref<const Eigen::MatrixXd>& z, const ConditionedHessian& h) : z_(z) {
    if (z_.rows() != h.size() && z_.cols() > 0) throw DimensionError("clinical matrix rows differ from sample count");
    if (z_.cols() == 0) return;
    hz_ = h.apply(z_);
    Eigen::MatrixXd m = z_.transpose() * hz_;
    m = 0.5 * (m + m.transpose());
    llt_.compute(m);
    if (llt_.info() != Eigen::Success) throw IllConditionedError("Z'HZ is singular");
    const Eigen::VectorXd piv = Eigen::MatrixXd(llt_.matrixL()).diagonal().array().square();
    if (piv.minCoeff() < ConditionedHessian::kPivotRatio * piv.maxCoeff())
      throw IllConditionedError("Z'HZ is numerically singular");
  }

  Eigen::Index clinical_columns() const { return z_.cols(); }
  const Eigen::MatrixXd& hz() const { return hz_; }
  const Eigen::MatrixXd& z() const { return z_; }

  /// U x
  Eigen::MatrixXd apply(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
    if (z_.cols() == 0) return x;
    return x - z_ * llt_.solve(hz_.transpose() * x);
  }

  /// x - HZ (Z'HZ)^{-1} Z' x, i.e. U' applied to x.
  Eigen::MatrixXd apply_transpose(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
    if (z_.cols() == 0) return x;
    return x - hz_ * llt_.solve(z_.transpose() * x);
  }

  /// (Z'HZ)^{-1} x
  Eigen::MatrixXd solve(const Eigen::Ref<const Eigen::MatrixXd>& x) const { return llt_.solve(x); }

 private:
  Eigen::MatrixXd z_;
  Eigen::MatrixXd hz_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

}  // namespace pkb
