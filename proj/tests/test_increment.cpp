#include <gtest/gtest.h>

#include "support.hpp"

using namespace pkb;
using namespace pkb::testing;

TEST(Transform, IdentityHessianNoClinical) {
  std::mt19937_64 rng(1);
  const VectorXd g = normal_vector(5, rng);
  const MatrixXd k = normal_matrix(5, 5, rng);
  const auto t = transform(Hessian::scaled_identity(5, 1.0), MatrixXd(5, 0), g, k);
  EXPECT_LT((t.etaTilde - g / std::sqrt(2.0)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((t.kTilde - k / std::sqrt(2.0)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Transform, FullRankClinicalAnnihilates) {
  std::mt19937_64 rng(2);
  const Eigen::Index n = 4;
  const auto t = transform(Hessian::full(random_spd(n, rng)), normal_matrix(n, n, rng), normal_vector(n, rng),
                           normal_matrix(n, n, rng));
  EXPECT_LT(t.etaTilde.norm(), 1e-10);
}

TEST(Transform, ReproducesGammaMinimizedObjective) {
  std::mt19937_64 rng(3);
  const auto r = random_reduction_instance(rng, 6, 2);
  const auto t = transform(Hessian::full(r.h), r.z, r.grad, r.k);
  // Independent route: H = L L', objective = 1/2 ||L'(K b + Z g) + L^-1 grad||^2, least squares in g.
  Eigen::LLT<MatrixXd> llt(r.h);
  const MatrixXd lt = llt.matrixU();
  const VectorXd w = llt.matrixL().solve(r.grad);
  for (int rep = 0; rep < 20; ++rep) {
    const VectorXd beta = normal_vector(6, rng);
    const VectorXd rhs = -(lt * (r.k * beta) + w);
    const VectorXd gamma = (lt * r.z).colPivHouseholderQr().solve(rhs);
    const double direct = 0.5 * (lt * (r.k * beta + r.z * gamma) + w).squaredNorm();
    const double reduced = (t.etaTilde + t.kTilde * beta).squaredNorm();
    EXPECT_NEAR(reduced, direct, 1e-9 * std::max(1.0, direct));
  }
}

TEST(Transform, ProjectorIdempotent) {
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 10; ++rep) {
    const MatrixXd h = random_spd(7, rng);
    const MatrixXd z = normal_matrix(7, 3, rng);
    ConditionedHessian ch(Hessian::full(h));
    ClinicalProjector p(z, ch);
    const MatrixXd u = p.apply(MatrixXd::Identity(7, 7));
    EXPECT_LT((u * u - u).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((z.transpose() * h * u).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(SolveBeta, ZeroEtaGivesZero) {
  std::mt19937_64 rng(5);
  const MatrixXd k = normal_matrix(6, 6, rng);
  for (auto kind : {PenaltyKind::L1, PenaltyKind::L2})
    EXPECT_EQ(solve_beta(VectorXd::Zero(6), k, Penalty{kind, 0.1}).cwiseAbs().maxCoeff(), 0.0);
}

TEST(SolveBeta, LassoThreshold) {
  std::mt19937_64 rng(6);
  const MatrixXd k = normal_matrix(8, 8, rng);
  const VectorXd eta = normal_vector(8, rng);
  const double lmax = 2.0 * (k.transpose() * eta).lpNorm<Eigen::Infinity>();
  EXPECT_EQ(solve_beta(eta, k, Penalty{PenaltyKind::L1, lmax * 1.0001}).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_GT(solve_beta(eta, k, Penalty{PenaltyKind::L1, lmax * 0.9}).cwiseAbs().maxCoeff(), 0.0);
}

TEST(SolveBeta, RidgeMatchesNormalEquations) {
  std::mt19937_64 rng(7);
  const MatrixXd k = normal_matrix(8, 8, rng);
  const VectorXd eta = normal_vector(8, rng);
  const double lambda = 0.3;
  MatrixXd a = k.transpose() * k + lambda * MatrixXd::Identity(8, 8);
  const VectorXd expect = a.fullPivLu().solve(-k.transpose() * eta);
  EXPECT_LT((solve_beta(eta, k, Penalty{PenaltyKind::L2, lambda}) - expect).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(SolveBeta, LassoTwoDimensionalGridOracle) {
  std::mt19937_64 rng(8);
  for (int rep = 0; rep < 5; ++rep) {
    const MatrixXd k = normal_matrix(8, 2, rng);
    const VectorXd eta = normal_vector(8, rng);
    const double lambda = 0.5;
    auto obj = [&](const VectorXd& b) { return (eta + k * b).squaredNorm() + lambda * b.lpNorm<1>(); };
    const VectorXd beta = solve_beta(eta, k, Penalty{PenaltyKind::L1, lambda});
    // Coarse grid, then repeated refinement around the best point.
    VectorXd best = VectorXd::Zero(2);
    double width = 10.0;
    for (int level = 0; level < 40; ++level) {
      VectorXd centre = best;
      for (int i = -20; i <= 20; ++i)
        for (int j = -20; j <= 20; ++j) {
          VectorXd b(2);
          b << centre[0] + width * i / 20.0, centre[1] + width * j / 20.0;
          if (obj(b) < obj(best)) best = b;
        }
      width *= 0.25;
    }
    EXPECT_LE(obj(beta), obj(best) + 1e-7);
  }
}

TEST(SolveBeta, PenaltyShrinksNorm) {
  std::mt19937_64 rng(9);
  const MatrixXd k = normal_matrix(10, 10, rng);
  const VectorXd eta = normal_vector(10, rng);
  for (auto kind : {PenaltyKind::L2, PenaltyKind::L1}) {
    double last = std::numeric_limits<double>::infinity();
    for (double lambda : {0.01, 0.1, 1.0, 10.0}) {
      const double norm = solve_beta(eta, k, Penalty{kind, lambda}).norm();
      EXPECT_LE(norm, last + (kind == PenaltyKind::L1 ? 1e-6 : 0.0));
      last = norm;
    }
  }
}

TEST(RecoverGamma, EmptyWithoutClinical) {
  EXPECT_EQ(recover_gamma(Hessian::scaled_identity(3, 1.0), MatrixXd(3, 0), MatrixXd::Identity(3, 3),
                          VectorXd::Ones(3), VectorXd::Ones(3))
                .size(),
            0);
}

TEST(RecoverGamma, IdentityHessianIsLeastSquaresOnGradient) {
  std::mt19937_64 rng(10);
  const MatrixXd z = normal_matrix(6, 2, rng);
  const VectorXd g = normal_vector(6, rng);
  const VectorXd gamma = recover_gamma(Hessian::scaled_identity(6, 1.0), z, MatrixXd::Identity(6, 6),
                                       VectorXd::Zero(6), g);
  const VectorXd expect = -(z.transpose() * z).inverse() * z.transpose() * g;
  EXPECT_LT((gamma - expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(RecoverGamma, Stationarity) {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 10; ++rep) {
    const auto r = random_reduction_instance(rng, 8, 3);
    const VectorXd beta = normal_vector(8, rng);
    const VectorXd gamma = recover_gamma(Hessian::full(r.h), r.z, r.k, beta, r.grad);
    const VectorXd v = r.k * beta + r.z * gamma + r.h.inverse() * r.grad;
    EXPECT_LT((r.z.transpose() * r.h * v).norm(), 1e-8);
  }
}

TEST(ReductionEquivalence, SmallInstances) {
  std::mt19937_64 rng(12);
  for (int rep = 0; rep < 30; ++rep) {
    const Eigen::Index n = 3 + rep % 8;
    const Eigen::Index q = rep % 4;
    const auto r = random_reduction_instance(rng, n, q);
    const double l2 = reduction_pipeline(r, PenaltyKind::L2);
    EXPECT_NEAR(l2, l2_oracle(r), 1e-8) << "rep " << rep;
    const double l1 = reduction_pipeline(r, PenaltyKind::L1);
    EXPECT_NEAR(l1, l1_oracle(r, 50000), 1e-6) << "rep " << rep;
  }
}

TEST(ReductionEquivalence, ObjectiveNotWorseThanZeroIncrement) {
  std::mt19937_64 rng(13);
  for (int rep = 0; rep < 20; ++rep) {
    const auto r = random_reduction_instance(rng, 9, 2);
    const VectorXd zero = VectorXd::Zero(9);
    const VectorXd gamma0 = recover_gamma(Hessian::full(r.h), r.z, r.k, zero, r.grad);
    for (auto kind : {PenaltyKind::L1, PenaltyKind::L2})
      EXPECT_LE(reduction_pipeline(r, kind), eq3_objective(r, zero, gamma0, kind) + 1e-12);
  }
}

TEST(IncrementSolver, AgreesWithReductionPipeline) {
  std::mt19937_64 rng(14);
  for (int rep = 0; rep < 20; ++rep) {
    const auto r = random_reduction_instance(rng, 10, rep % 3);
    LossDerivatives d{r.grad, Hessian::full(r.h)};
    for (auto kind : {PenaltyKind::L2, PenaltyKind::L1}) {
      SolverOptions opt;
      opt.penalty = kind;
      opt.threads = 1;
      IncrementSolver solver({r.k}, r.z, opt);
      const auto sol = solver.solve(d, r.lambda);
      const double direct = eq3_objective(r, sol.beta, sol.gamma, kind);
      EXPECT_NEAR(sol.regularizedLoss, direct, 1e-8 * std::max(1.0, std::abs(direct)));
      EXPECT_NEAR(direct, reduction_pipeline(r, kind), kind == PenaltyKind::L2 ? 1e-8 : 1e-6) << "rep " << rep;
    }
  }
}

TEST(IncrementSolver, ConstantHessianCacheMatchesGeneralPath) {
  std::mt19937_64 rng(15);
  const Eigen::Index n = 12;
  const MatrixXd x = normal_matrix(n, 4, rng);
  const MatrixXd z = normal_matrix(n, 2, rng);
  std::vector<MatrixXd> ks{kernel_matrix(x, x, VectorXd::Ones(4), KernelSpec::rbf(), true),
                           kernel_matrix(x, x, VectorXd::Ones(4), KernelSpec::polynomial(3), true)};
  const Outcome o = RegressionOutcome{normal_vector(n, rng)};
  const auto d = derivatives(o, VectorXd::Zero(n));
  for (auto kind : {PenaltyKind::L2, PenaltyKind::L1}) {
    SolverOptions plain, cached;
    plain.penalty = cached.penalty = kind;
    cached.constantHessianScale = 2.0 / static_cast<double>(n);
    const auto a = IncrementSolver(ks, z, plain).solve(d, 0.05);
    const auto b = IncrementSolver(ks, z, cached).solve(d, 0.05);
    EXPECT_EQ(a.pathwayIndex, b.pathwayIndex);
    EXPECT_NEAR(a.regularizedLoss, b.regularizedLoss, 1e-9);
    EXPECT_LT((a.fitted - b.fitted).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(BestIncrement, SinglePathwayAndZeroGradient) {
  std::mt19937_64 rng(16);
  const auto r = random_reduction_instance(rng, 6, 1);
  LossDerivatives d{r.grad, Hessian::full(r.h)};
  EXPECT_EQ(best_increment(d, r.z, {r.k}, Penalty{PenaltyKind::L2, 0.1}).pathwayIndex, 0);
  LossDerivatives flat{VectorXd::Zero(6), Hessian::full(r.h)};
  for (auto kind : {PenaltyKind::L1, PenaltyKind::L2}) {
    const auto sol = best_increment(flat, r.z, {r.k, r.k}, Penalty{kind, 0.1});
    EXPECT_LT(sol.beta.cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT(sol.gamma.cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(BestIncrement, SelectsArgminOfPerPathwayObjectives) {
  std::mt19937_64 rng(17);
  for (int rep = 0; rep < 10; ++rep) {
    auto r = random_reduction_instance(rng, 10, 2);
    std::vector<MatrixXd> ks;
    for (int m = 0; m < 3; ++m) {
      const MatrixXd x = normal_matrix(10, 2 + m, rng);
      ks.push_back(kernel_matrix(x, x, VectorXd::Ones(2 + m), KernelSpec::polynomial(3), true));
    }
    LossDerivatives d{r.grad, Hessian::full(r.h)};
    const auto sol = best_increment(d, r.z, ks, Penalty{PenaltyKind::L2, r.lambda});
    int argmin = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int m = 0; m < 3; ++m) {
      r.k = ks[static_cast<std::size_t>(m)];
      const double v = l2_oracle(r);
      if (v < best) {
        best = v;
        argmin = m;
      }
    }
    EXPECT_EQ(sol.pathwayIndex, argmin);
    EXPECT_NEAR(sol.regularizedLoss, best, 1e-8 * std::max(1.0, std::abs(best)));
  }
}

TEST(Lasso, ConvergenceErrorWhenSweepsExhausted) {
  std::mt19937_64 rng(18);
  const MatrixXd a = normal_matrix(6, 6, rng);
  LassoOptions opt;
  opt.maxSweeps = 1;
  opt.tolerance = 1e-300;
  EXPECT_THROW(lasso_coordinate_descent(a.transpose() * a, normal_vector(6, rng), 1e-3, VectorXd(), opt),
               ConvergenceError);
}
