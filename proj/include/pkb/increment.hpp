#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "pkb/errors.hpp"
#include "pkb/linalg.hpp"
#include "pkb/loss.hpp"
#include "pkb/parallel.hpp"

namespace pkb {

enum class PenaltyKind { L1, L2 };

inline std::string to_string(PenaltyKind k) { return k == PenaltyKind::L1 ? "l1" : "l2"; }

inline PenaltyKind parse_penalty(const std::string& s) {
  if (s == "l1" || s == "L1") return PenaltyKind::L1;
  if (s == "l2" || s == "L2") return PenaltyKind::L2;
  throw UsageError("unknown penalty '" + s + "'");
}

struct Penalty {
  PenaltyKind kind = PenaltyKind::L2;
  double lambda = 1.0;

  void validate() const {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw UsageError("penalty lambda must be positive");
  }
  /// Omega(beta): ||beta||_1 or ||beta||_2^2.
  double omega(const Eigen::Ref<const Eigen::VectorXd>& beta) const {
    return kind == PenaltyKind::L1 ? beta.lpNorm<1>() : beta.squaredNorm();
  }
};

struct IncrementSolution {
  int pathwayIndex = -1;
  Eigen::VectorXd beta;
  Eigen::VectorXd gamma;
  Eigen::VectorXd fitted;  // K_m beta + Z gamma at the training samples
  double regularizedLoss = std::numeric_limits<double>::infinity();
};

struct LassoOptions {
  double tolerance = 1e-7;
  int maxSweeps = 10000;
};

/// Cyclic coordinate descent for  min_b 1/2 b'Gb + c'b + lambda ||b||_1  with
/// G symmetric PSD. Stops when a sweep moves no coordinate by more than
/// `tolerance` (scaled by sqrt(G_jj)) and the KKT residual is below
/// `tolerance * max(1, ||c||_inf)`.
inline Eigen::VectorXd lasso_coordinate_descent(const Eigen::Ref<const Eigen::MatrixXd>& g,
                                                const Eigen::Ref<const Eigen::VectorXd>& c, double lambda,
                                                Eigen::VectorXd beta, const LassoOptions& opt = {}) {
  const Eigen::Index n = c.size();
  if (g.rows() != n || g.cols() != n) throw DimensionError("lasso: Gram matrix shape mismatch");
  if (beta.size() != n) beta = Eigen::VectorXd::Zero(n);
  const double kktScale = std::max(1.0, c.lpNorm<Eigen::Infinity>());
  Eigen::VectorXd w = g * beta + c;  // gradient of the smooth part

  auto kkt = [&]() {
    double v = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (g(j, j) <= 0.0) continue;
      double r = beta[j] != 0.0 ? std::abs(w[j] + lambda * (beta[j] > 0 ? 1.0 : -1.0))
                                : std::max(0.0, std::abs(w[j]) - lambda);
      v = std::max(v, r);
    }
    return v;
  };

  // Active-set refinement from the current iterate: Newton steps on the
  // signed support (plus a null-direction step when G_AA is singular), dropping
  // the first coordinate that would change sign and adding the worst KKT
  // violator once the support is optimal. The objective never increases.
  // Returns true once the full KKT conditions hold.
  auto refine = [&](int maxSteps) -> bool {
    Eigen::VectorXi sign(n);
    for (Eigen::Index j = 0; j < n; ++j) sign[j] = beta[j] > 0 ? 1 : (beta[j] < 0 ? -1 : 0);
    for (int step = 0; step < maxSteps; ++step) {
      std::vector<Eigen::Index> active;
      for (Eigen::Index j = 0; j < n; ++j)
        if (sign[j] != 0) active.push_back(j);
      const auto a = static_cast<Eigen::Index>(active.size());
      bool blocked = false;
      if (a > 0) {
        Eigen::MatrixXd gaa(a, a);
        Eigen::VectorXd rhs(a), x(a), sa(a);
        for (Eigen::Index p = 0; p < a; ++p) {
          for (Eigen::Index q = 0; q < a; ++q) gaa(p, q) = g(active[p], active[q]);
          sa[p] = sign[active[p]];
          rhs[p] = -(c[active[p]] + lambda * sa[p]);
          x[p] = beta[active[p]];
        }
        const Eigen::VectorXd r = rhs - gaa * x;
        const Eigen::VectorXd d = gaa.completeOrthogonalDecomposition().solve(r);
        if (!d.allFinite()) return false;
        auto move = [&](const Eigen::VectorXd& dir, double tmax) {
          double t = tmax;
          Eigen::Index blocking = -1;
          for (Eigen::Index p = 0; p < a; ++p)
            if (sa[p] * dir[p] < 0.0 && std::abs(x[p] / dir[p]) < t) {
              t = std::abs(x[p] / dir[p]);
              blocking = p;
            }
          if (blocking < 0 && !std::isfinite(t)) return false;
          x += t * dir;
          if (blocking >= 0) {
            x[blocking] = 0.0;
            sign[active[blocking]] = 0;
          }
          return blocking >= 0;
        };
        blocked = move(d, 1.0);
        const Eigen::VectorXd nullDir = r - gaa * d;
        if (!blocked && nullDir.lpNorm<Eigen::Infinity>() > 1e-10 * std::max(1.0, rhs.lpNorm<Eigen::Infinity>()))
          blocked = move(nullDir, std::numeric_limits<double>::infinity());
        for (Eigen::Index p = 0; p < a; ++p) beta[active[p]] = sign[active[p]] == 0 ? 0.0 : x[p];
        w.noalias() = g * beta + c;
      }
      if (blocked) continue;
      Eigen::Index worst = -1;
      double violation = opt.tolerance * kktScale;
      for (Eigen::Index j = 0; j < n; ++j)
        if (sign[j] == 0 && g(j, j) > 0.0 && std::abs(w[j]) - lambda > violation) {
          violation = std::abs(w[j]) - lambda;
          worst = j;
        }
      if (worst < 0) return kkt() <= opt.tolerance * kktScale;
      sign[worst] = w[worst] > 0 ? -1 : 1;
    }
    return false;
  };

  for (int sweep = 0; sweep < opt.maxSweeps; ++sweep) {
    if (sweep % 8 == 7 && refine(static_cast<int>(2 * n) + 20)) return beta;
    double maxChange = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double gjj = g(j, j);
      if (gjj <= 0.0) {
        if (beta[j] != 0.0) {
          w.noalias() -= g.col(j) * beta[j];
          beta[j] = 0.0;
        }
        continue;
      }
      const double rho = w[j] - gjj * beta[j];
      double next = 0.0;
      if (rho < -lambda) next = (-rho - lambda) / gjj;
      else if (rho > lambda) next = (-rho + lambda) / gjj;
      const double delta = next - beta[j];
      if (delta != 0.0) {
        w.noalias() += g.col(j) * delta;
        beta[j] = next;
        maxChange = std::max(maxChange, std::abs(delta) * std::sqrt(gjj));
      }
    }
    if (sweep % 64 == 63) w.noalias() = g * beta + c;
    if (maxChange <= opt.tolerance) {
      w.noalias() = g * beta + c;
      if (kkt() <= opt.tolerance * kktScale) return beta;
    }
  }
  throw ConvergenceError("L1 coordinate descent did not converge in " + std::to_string(opt.maxSweeps) + " sweeps");
}

struct TransformedProblem {
  Eigen::VectorXd etaTilde;
  Eigen::MatrixXd kTilde;
};

/// Reduces the clinical-augmented quadratic subproblem for one pathway to a
/// penalized least-squares problem in beta:
///   eta~ = H^{1/2} U H^{-1} grad / sqrt(2),  K~ = H^{1/2} U K / sqrt(2),
/// with U = I - Z (Z'HZ)^{-1} Z'H.
inline TransformedProblem transform(const Hessian& h, const Eigen::Ref<const Eigen::MatrixXd>& z,
                                    const Eigen::Ref<const Eigen::VectorXd>& grad,
                                    const Eigen::Ref<const Eigen::MatrixXd>& k) {
  if (grad.size() != h.size || k.rows() != h.size) throw DimensionError("transform: shape mismatch");
  ConditionedHessian ch(h);
  ClinicalProjector proj(z, ch);
  const Eigen::MatrixXd root = ch.sqrt();
  const double s = 1.0 / std::sqrt(2.0);
  TransformedProblem out;
  out.etaTilde = s * (root * proj.apply(ch.solve(grad)));
  out.kTilde = s * (root * proj.apply(k));
  return out;
}

/// argmin_beta ||eta~ + K~ beta||^2 + lambda * Omega(beta).
inline Eigen::VectorXd solve_beta(const Eigen::Ref<const Eigen::VectorXd>& etaTilde,
                                  const Eigen::Ref<const Eigen::MatrixXd>& kTilde, const Penalty& penalty,
                                  const Eigen::VectorXd& warmStart = {}, const LassoOptions& lasso = {}) {
  if (kTilde.rows() != etaTilde.size()) throw DimensionError("solve_beta: shape mismatch");
  penalty.validate();
  const Eigen::Index n = kTilde.cols();
  Eigen::MatrixXd gram = kTilde.transpose() * kTilde;
  gram = 0.5 * (gram + gram.transpose());
  const Eigen::VectorXd lin = kTilde.transpose() * etaTilde;
  if (penalty.kind == PenaltyKind::L2) {
    gram.diagonal().array() += penalty.lambda;
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success) throw NumericError("ridge system is not positive definite");
    return -llt.solve(lin);
  }
  // ||eta + K b||^2 = b'(K'K)b + 2(K'eta)'b + const
  return lasso_coordinate_descent(2.0 * gram, 2.0 * lin, penalty.lambda,
                                  warmStart.size() == n ? warmStart : Eigen::VectorXd::Zero(n), lasso);
}

/// gamma = -(Z'HZ)^{-1} Z'H (K beta + H^{-1} grad); empty when there are no clinical columns.
inline Eigen::VectorXd recover_gamma(const Hessian& h, const Eigen::Ref<const Eigen::MatrixXd>& z,
                                     const Eigen::Ref<const Eigen::MatrixXd>& k,
                                     const Eigen::Ref<const Eigen::VectorXd>& beta,
                                     const Eigen::Ref<const Eigen::VectorXd>& grad) {
  if (z.cols() == 0) return Eigen::VectorXd(0);
  ConditionedHessian ch(h);
  ClinicalProjector proj(z, ch);
  return -proj.solve(proj.hz().transpose() * (k * beta) + z.transpose() * grad);
}

/// Value of the regularized second-order objective
///   1/2 (K b + Z g + H^{-1} grad)' H (K b + Z g + H^{-1} grad) + lambda Omega(b)
/// under the same Hessian conditioning the solver applies.
inline double regularized_loss(const Hessian& h, const Eigen::Ref<const Eigen::MatrixXd>& z,
                               const Eigen::Ref<const Eigen::MatrixXd>& k,
                               const Eigen::Ref<const Eigen::VectorXd>& grad,
                               const Eigen::Ref<const Eigen::VectorXd>& beta,
                               const Eigen::Ref<const Eigen::VectorXd>& gamma, const Penalty& penalty) {
  ConditionedHessian ch(h);
  Eigen::VectorXd v = k * beta + ch.solve(grad);
  if (z.cols() > 0) v += z * gamma;
  return 0.5 * v.dot(ch.apply(v).col(0)) + penalty.lambda * penalty.omega(beta);
}

struct SolverOptions {
  PenaltyKind penalty = PenaltyKind::L2;
  /// Kernel eigen-directions with eigenvalue below this fraction of the largest
  /// are treated as numerically null.
  double rankTolerance = 1e-11;
  /// When every Hessian passed to solve() is (scale * I), the penalty-free
  /// parts of each pathway subproblem are factorized once up front.
  std::optional<double> constantHessianScale;
  LassoOptions lasso;
  int threads = default_thread_count();
};

/// Per-fit increment solver. Each pathway kernel is eigendecomposed once,
/// K = Q diag(mu) Q', and the subproblem is solved in the coordinates
/// beta = Q alpha restricted to the numerical range of K. For the L2 penalty
/// the optimum lies in that range, so this is the same problem the
/// transform / solve_beta / recover_gamma route solves, but without forming
/// H^{1/2} or H^{-1}: with P = H U,
///   (B'PB + 2 lambda I) alpha = -B'(U' grad),   B = Q diag(mu).
/// For L1, coordinate descent runs on G = K P K and c = K U' grad.
class IncrementSolver {
 public:
  IncrementSolver(std::vector<Eigen::MatrixXd> kernels, Eigen::MatrixXd clinical, SolverOptions opt = {})
      : kernels_(std::move(kernels)), z_(std::move(clinical)), opt_(opt) {
    if (kernels_.empty()) throw DataError("no pathways to fit");
    n_ = kernels_.front().rows();
    if (z_.size() == 0) z_.resize(n_, 0);
    if (z_.rows() != n_) throw DimensionError("clinical matrix rows differ from kernel size");
    for (const auto& k : kernels_)
      if (k.rows() != n_ || k.cols() != n_) throw DimensionError("kernel matrices must be N x N");

    bases_.resize(kernels_.size());
    std::optional<ConditionedHessian> ch;
    std::optional<ClinicalProjector> proj;
    if (opt_.constantHessianScale) {
      ch.emplace(Hessian::scaled_identity(n_, *opt_.constantHessianScale));
      proj.emplace(z_, *ch);
    }
    parallel_for(
        kernels_.size(),
        [&](std::size_t m) {
          build_basis(m);
          if (ch) cache_constant(m, *ch, *proj);
        },
        opt_.threads);
  }

  Eigen::Index samples() const { return n_; }
  std::size_t pathways() const { return kernels_.size(); }
  const Eigen::MatrixXd& kernel(std::size_t m) const { return kernels_[m]; }
  const Eigen::MatrixXd& clinical() const { return z_; }
  const SolverOptions& options() const { return opt_; }
  /// Numerical rank kept for pathway m.
  Eigen::Index rank(std::size_t m) const { return bases_[m].q.cols(); }

  /// ||K_m U' grad||_inf per pathway: the smallest L1 lambda at which beta = 0
  /// is optimal, i.e. 2 ||K~' eta~||_inf.
  std::vector<double> lambda_max(const LossDerivatives& d) const {
    Context ctx = context(d);
    std::vector<double> out(kernels_.size());
    for (std::size_t m = 0; m < kernels_.size(); ++m)
      out[m] = (kernels_[m] * ctx.u).lpNorm<Eigen::Infinity>();
    return out;
  }

  /// Largest eigenvalue of K~'K~ = K P K / 2 per pathway: the ridge penalty
  /// at which the best-determined direction is shrunk by half.
  std::vector<double> gram_top_eigenvalue(const LossDerivatives& d) const {
    Context ctx = context(d);
    std::vector<double> out(kernels_.size(), 0.0);
    parallel_for(
        kernels_.size(),
        [&](std::size_t m) {
          const Basis& basis = bases_[m];
          if (basis.q.cols() == 0) return;
          Eigen::MatrixXd s = basis.b.transpose() * apply_p(ctx, basis.b);
          s = 0.25 * (s + s.transpose());
          Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s, Eigen::EigenvaluesOnly);
          if (es.info() != Eigen::Success) throw NumericError("Gram eigendecomposition failed");
          out[m] = std::max(0.0, es.eigenvalues().maxCoeff());
        },
        opt_.threads);
    return out;
  }

  /// Solves every pathway subproblem and returns the one with the smallest
  /// regularized loss (lowest index on ties). `warm` carries per-pathway L1
  /// warm starts between calls and is updated in place.
  IncrementSolution solve(const LossDerivatives& d, double lambda,
                          std::vector<Eigen::VectorXd>* warm = nullptr) const {
    Penalty{opt_.penalty, lambda}.validate();
    if (d.gradient.size() != n_) throw DimensionError("gradient length differs from sample count");
    Context ctx = context(d);
    std::vector<Candidate> cand(kernels_.size());
    parallel_for(
        kernels_.size(),
        [&](std::size_t m) {
          const Eigen::VectorXd* start = warm && m < warm->size() ? &(*warm)[m] : nullptr;
          cand[m] = solve_pathway(m, ctx, lambda, start);
        },
        opt_.threads);

    std::size_t best = 0;
    for (std::size_t m = 1; m < cand.size(); ++m)
      if (cand[m].value < cand[best].value) best = m;
    if (!std::isfinite(cand[best].value)) throw NumericError("no pathway produced a finite regularized loss");
    if (warm) {
      warm->resize(kernels_.size());
      for (std::size_t m = 0; m < cand.size(); ++m) (*warm)[m] = cand[m].beta;
    }

    IncrementSolution out;
    out.pathwayIndex = static_cast<int>(best);
    out.beta = std::move(cand[best].beta);
    out.regularizedLoss = cand[best].value;
    const Eigen::VectorXd kb = kernels_[best] * out.beta;
    out.fitted = kb;
    if (z_.cols() > 0) {
      out.gamma = -ctx.proj.solve(ctx.proj.hz().transpose() * kb + z_.transpose() * d.gradient);
      out.fitted += z_ * out.gamma;
    } else {
      out.gamma = Eigen::VectorXd(0);
    }
    return out;
  }

 private:
  struct Basis {
    Eigen::MatrixXd q;  // N x r eigenvectors
    Eigen::MatrixXd b;  // q * diag(mu)
    // Constant-Hessian caches.
    Eigen::MatrixXd gramVectors;  // eigenvectors of B'PB (L2)
    Eigen::VectorXd gramValues;
    Eigen::MatrixXd gram;  // K P K (L1)
  };

  struct Context {
    ConditionedHessian ch;
    ClinicalProjector proj;
    Eigen::VectorXd u;  // U' grad = P H^{-1} grad
    double constant;    // objective value at f = 0 with gamma optimal
    bool cached;
  };

  struct Candidate {
    Eigen::VectorXd beta;
    double value = std::numeric_limits<double>::infinity();
  };

  Context context(const LossDerivatives& d) const {
    ConditionedHessian ch(d.hessian);
    ClinicalProjector proj(z_, ch);
    Eigen::VectorXd u = proj.apply_transpose(d.gradient);
    double constant = d.gradient.dot(ch.solve(d.gradient).col(0));
    if (z_.cols() > 0) {
      const Eigen::VectorXd zg = z_.transpose() * d.gradient;
      constant -= zg.dot(proj.solve(zg).col(0));
    }
    const bool cached = opt_.constantHessianScale && d.hessian.form == Hessian::Form::ScaledIdentity &&
                        d.hessian.scale == *opt_.constantHessianScale && ch.jitter() == 0.0;
    return Context{std::move(ch), std::move(proj), std::move(u), 0.5 * constant, cached};
  }

  // P x = H U x
  static Eigen::MatrixXd apply_p(const Context& ctx, const Eigen::Ref<const Eigen::MatrixXd>& x) {
    return ctx.ch.apply(ctx.proj.apply(x));
  }

  void build_basis(std::size_t m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(kernels_[m]);
    if (es.info() != Eigen::Success) throw NumericError("kernel eigendecomposition failed");
    const Eigen::VectorXd& mu = es.eigenvalues();  // ascending
    const double top = mu[mu.size() - 1];
    Eigen::Index keep = 0;
    if (top > 0.0)
      for (Eigen::Index i = 0; i < mu.size(); ++i)
        if (mu[i] > opt_.rankTolerance * top) ++keep;
    Basis& basis = bases_[m];
    basis.q = es.eigenvectors().rightCols(keep);
    basis.b = basis.q * mu.tail(keep).asDiagonal();
  }

  void cache_constant(std::size_t m, const ConditionedHessian& ch, const ClinicalProjector& proj) {
    Basis& basis = bases_[m];
    Eigen::MatrixXd s = basis.b.transpose() * ch.apply(proj.apply(basis.b));
    s = 0.5 * (s + s.transpose());
    if (opt_.penalty == PenaltyKind::L2) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
      if (es.info() != Eigen::Success) throw NumericError("Gram eigendecomposition failed");
      basis.gramVectors = es.eigenvectors();
      basis.gramValues = es.eigenvalues().cwiseMax(0.0);
    } else {
      basis.gram = basis.q * s * basis.q.transpose();
      basis.gram = 0.5 * (basis.gram + basis.gram.transpose());
    }
  }

  Candidate solve_pathway(std::size_t m, const Context& ctx, double lambda, const Eigen::VectorXd* warm) const {
    const Basis& basis = bases_[m];
    Candidate out;
    const Eigen::VectorXd bu = basis.b.transpose() * ctx.u;
    if (basis.q.cols() == 0) {
      out.beta = Eigen::VectorXd::Zero(n_);
      out.value = ctx.constant;
      return out;
    }
    if (opt_.penalty == PenaltyKind::L2) {
      Eigen::VectorXd alpha;
      double quad = 0.0;
      if (ctx.cached) {
        const Eigen::VectorXd proj = basis.gramVectors.transpose() * bu;
        const Eigen::VectorXd coef = -(proj.array() / (basis.gramValues.array() + 2.0 * lambda)).matrix();
        alpha = basis.gramVectors * coef;
        quad = (basis.gramValues.array() * coef.array().square()).sum();
      } else {
        Eigen::MatrixXd s = basis.b.transpose() * apply_p(ctx, basis.b);
        s = 0.5 * (s + s.transpose());
        Eigen::MatrixXd a = s;
        a.diagonal().array() += 2.0 * lambda;
        Eigen::LLT<Eigen::MatrixXd> llt(a);
        if (llt.info() != Eigen::Success) throw NumericError("ridge system is not positive definite");
        alpha = -llt.solve(bu);
        quad = alpha.dot(s * alpha);
      }
      out.beta = basis.q * alpha;
      out.value = 0.5 * quad + alpha.dot(bu) + ctx.constant + lambda * alpha.squaredNorm();
      return out;
    }

    Eigen::MatrixXd local;
    const Eigen::MatrixXd* gram = &basis.gram;
    if (!ctx.cached || basis.gram.size() == 0) {
      Eigen::MatrixXd s = basis.b.transpose() * apply_p(ctx, basis.b);
      s = 0.5 * (s + s.transpose());
      local = basis.q * s * basis.q.transpose();
      local = 0.5 * (local + local.transpose());
      gram = &local;
    }
    const Eigen::VectorXd c = basis.q * bu;
    Eigen::VectorXd start = warm && warm->size() == n_ ? *warm : Eigen::VectorXd::Zero(n_);
    out.beta = lasso_coordinate_descent(*gram, c, lambda, std::move(start), opt_.lasso);
    out.value = 0.5 * out.beta.dot(*gram * out.beta) + c.dot(out.beta) + ctx.constant +
                lambda * out.beta.lpNorm<1>();
    return out;
  }

  std::vector<Eigen::MatrixXd> kernels_;
  Eigen::MatrixXd z_;
  SolverOptions opt_;
  Eigen::Index n_ = 0;
  std::vector<Basis> bases_;
};

/// One-shot increment selection across pathways.
inline IncrementSolution best_increment(const LossDerivatives& d, const Eigen::Ref<const Eigen::MatrixXd>& z,
                                        const std::vector<Eigen::MatrixXd>& kernels, const Penalty& penalty) {
  SolverOptions opt;
  opt.penalty = penalty.kind;
  IncrementSolver solver(kernels, z, opt);
  return solver.solve(d, penalty.lambda);
}

}  // namespace pkb
