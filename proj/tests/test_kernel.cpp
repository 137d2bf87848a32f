#include <gtest/gtest.h>

#include "support.hpp"

using namespace pkb;
using namespace pkb::testing;

namespace {

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace

TEST(RbfKernel, IdenticalInputsGiveOne) {
  EXPECT_DOUBLE_EQ(rbf_kernel(vec({0.3, -1.2}), vec({0.3, -1.2}), vec({1, 1})), 1.0);
}

TEST(RbfKernel, HandValues) {
  EXPECT_NEAR(rbf_kernel(vec({1, 0}), vec({0, 0}), vec({1, 1})), std::exp(-0.5), 1e-15);
  EXPECT_NEAR(rbf_kernel(vec({1, 5}), vec({0, 9}), vec({1, 0})), std::exp(-1.0), 1e-15);
}

TEST(RbfKernel, Errors) {
  EXPECT_THROW(rbf_kernel(vec({1, 2}), vec({1}), vec({1, 1})), DimensionError);
  EXPECT_THROW(rbf_kernel(vec({1, 2}), vec({1, 2}), vec({0, 0})), DegenerateError);
  EXPECT_THROW(rbf_kernel(vec({1, 2}), vec({1, 2}), vec({-1, 2})), DataError);
}

TEST(PolyKernel, HandValues) {
  EXPECT_DOUBLE_EQ(poly_kernel(vec({1, 0}), vec({0, 1}), vec({2, 7}), 3), 1.0);
  EXPECT_DOUBLE_EQ(poly_kernel(vec({1, 1}), vec({1, 1}), vec({1, 1}), 3), 8.0);
  EXPECT_DOUBLE_EQ(poly_kernel(vec({2, 0}), vec({3, 0}), vec({1, 3}), 2), 6.25);
}

TEST(PolyKernel, RejectsDegreeZero) {
  EXPECT_THROW(poly_kernel(vec({1}), vec({1}), vec({1}), 0), UsageError);
  EXPECT_THROW(KernelSpec::parse("poly0"), UsageError);
  EXPECT_THROW(KernelSpec::parse("linear"), UsageError);
  EXPECT_EQ(KernelSpec::parse("poly3").degree, 3);
}

TEST(KernelMatrix, SingleSample) {
  const MatrixXd x = vec({0.4, 1.1, -2}).transpose();
  const MatrixXd k = kernel_matrix(x, x, VectorXd::Ones(3), KernelSpec::rbf(), true);
  ASSERT_EQ(k.rows(), 1);
  EXPECT_EQ(k(0, 0), 1.0);
}

TEST(KernelMatrix, EntriesMatchScalarKernel) {
  std::mt19937_64 rng(11);
  const MatrixXd a = normal_matrix(4, 5, rng), b = normal_matrix(3, 5, rng);
  VectorXd w = normal_vector(5, rng).cwiseAbs();
  for (const auto& spec : {KernelSpec::rbf(), KernelSpec::polynomial(3), KernelSpec::polynomial(2)}) {
    const MatrixXd k = kernel_matrix(a, b, w, spec);
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index j = 0; j < b.rows(); ++j) {
        const double expect = spec.kind == KernelKind::Rbf
                                  ? rbf_kernel(a.row(i).transpose(), b.row(j).transpose(), w)
                                  : poly_kernel(a.row(i).transpose(), b.row(j).transpose(), w, spec.degree);
        EXPECT_NEAR(k(i, j), expect, 1e-12 * std::max(1.0, std::abs(expect))) << spec.name();
      }
  }
}

TEST(KernelMatrix, SelfKernelInvariants) {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const MatrixXd x = normal_matrix(12, 4, rng);
    const VectorXd w = normal_vector(4, rng).cwiseAbs() + VectorXd::Constant(4, 0.01);
    for (const auto& spec : {KernelSpec::rbf(), KernelSpec::polynomial(3)}) {
      const MatrixXd k = kernel_matrix(x, x, w, spec, true);
      EXPECT_EQ((k - k.transpose()).cwiseAbs().maxCoeff(), 0.0);
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(k);
      EXPECT_GE(es.eigenvalues().minCoeff(), -1e-8 * k.norm());
      if (spec.kind == KernelKind::Rbf) {
        for (Eigen::Index i = 0; i < k.rows(); ++i) EXPECT_EQ(k(i, i), 1.0);
        EXPECT_GT(k.minCoeff(), 0.0);
        EXPECT_LE(k.maxCoeff(), 1.0);
      }
    }
  }
}

TEST(KernelMatrix, UniformWeightsScaleFree) {
  std::mt19937_64 rng(5);
  const MatrixXd x = normal_matrix(6, 3, rng);
  const MatrixXd a = kernel_matrix(x, x, VectorXd::Ones(3), KernelSpec::polynomial(3));
  const MatrixXd b = kernel_matrix(x, x, VectorXd::Constant(3, 7.5), KernelSpec::polynomial(3));
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ResolvePathway, DropsAbsentGenesAndAppliesWeights) {
  KernelSpec spec = KernelSpec::rbf();
  spec.geneWeights = {{"B", 2.0}};
  std::vector<std::string> warnings;
  auto old = set_warning_sink([&](const std::string& m) { warnings.push_back(m); });
  const auto r = resolve_pathway("P", {"A", "B", "X"}, {"B", "C", "A"}, spec);
  set_warning_sink(old);
  ASSERT_EQ(r.genes, (std::vector<std::string>{"A", "B"}));
  EXPECT_EQ(r.columns, (std::vector<Eigen::Index>{2, 0}));
  EXPECT_EQ(r.weights[0], 1.0);
  EXPECT_EQ(r.weights[1], 2.0);
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(ResolvePathway, NoGenesIsEmptyPathway) {
  auto old = set_warning_sink(nullptr);
  EXPECT_THROW(resolve_pathway("P", {"X", "Y"}, {"A"}, KernelSpec::rbf()), EmptyPathwayError);
  set_warning_sink(old);
}

TEST(PathwayKernel, CrossKernelUsesPathwayColumns) {
  std::mt19937_64 rng(8);
  const MatrixXd train = normal_matrix(5, 3, rng), test = normal_matrix(2, 3, rng);
  const std::vector<std::string> genes{"g1", "g2", "g3"};
  const std::vector<std::string> testGenes{"g3", "g1", "g2"};
  MatrixXd permuted(2, 3);
  permuted << test.col(2), test.col(0), test.col(1);
  const auto k = pathway_kernel(permuted, testGenes, train, genes, "P", {"g1", "g3"}, KernelSpec::polynomial(3));
  for (Eigen::Index i = 0; i < 2; ++i)
    for (Eigen::Index j = 0; j < 5; ++j) {
      const double dot = 0.5 * (test(i, 0) * train(j, 0) + test(i, 2) * train(j, 2));
      EXPECT_NEAR(k.values(i, j), std::pow(1 + dot, 3), 1e-12);
    }
}
