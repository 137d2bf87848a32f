#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "pkb/dataset.hpp"
#include "pkb/errors.hpp"
#include "pkb/loss.hpp"

namespace pkb::sim {

enum class Model { M1 = 1, M2 = 2, M3 = 3 };

struct SimDesign {
  Model model = Model::M1;
  int pathwayCount = 20;
  int genesPerPathway = 5;
  int sampleSize = 300;
  OutcomeType outcomeType = OutcomeType::Regression;
  double censorFraction = 0.20;
  double targetMedian = 20.0;
  double weibullShape = 1.0;  // rho
  double bernoulliP = 0.5;
  std::uint64_t seed = 0;

  static constexpr int kClinical = 5;

  void validate() const {
    if (genesPerPathway < 2) throw UsageError("simulation needs at least 2 genes per pathway");
    const int needed = model == Model::M3 ? 8 : 3;
    if (pathwayCount < needed)
      throw UsageError("model " + std::to_string(static_cast<int>(model)) + " needs at least " +
                       std::to_string(needed) + " pathways");
    if (sampleSize < 2) throw UsageError("simulation needs at least 2 samples");
    if (outcomeType == OutcomeType::Classification) throw UsageError("classification outcomes are not simulated");
    if (!(censorFraction >= 0.0 && censorFraction < 1.0)) throw UsageError("censor fraction must lie in [0, 1)");
    if (!(targetMedian > 0.0) || !(weibullShape > 0.0)) throw UsageError("Weibull parameters must be positive");
    if (!(bernoulliP >= 0.0 && bernoulliP <= 1.0)) throw UsageError("Bernoulli probability must lie in [0, 1]");
  }

  int genes() const { return pathwayCount * genesPerPathway; }

  /// 1-based indices of the pathways that enter the score function.
  std::vector<int> informative_pathways() const {
    std::vector<int> out(model == Model::M3 ? 8 : 3);
    std::iota(out.begin(), out.end(), 1);
    return out;
  }
};

struct Covariates {
  Eigen::MatrixXd expression;  // N x (M * genesPerPathway), pathway m owns a contiguous block
  Eigen::MatrixXd clinical;    // N x 5
};

inline Covariates gen_covariates(const SimDesign& design, std::mt19937_64& rng) {
  design.validate();
  Covariates c;
  const Eigen::Index n = design.sampleSize;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution coin(design.bernoulliP);
  c.expression.resize(n, design.genes());
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < c.expression.cols(); ++j) c.expression(i, j) = normal(rng);
  c.clinical.resize(n, SimDesign::kClinical);
  for (Eigen::Index i = 0; i < n; ++i) {
    c.clinical(i, 0) = coin(rng) ? 1.0 : 0.0;
    c.clinical(i, 1) = coin(rng) ? 1.0 : 0.0;
    for (Eigen::Index j = 2; j < SimDesign::kClinical; ++j) c.clinical(i, j) = normal(rng);
  }
  return c;
}

inline Covariates gen_covariates(const SimDesign& design) {
  std::mt19937_64 rng(design.seed);
  return gen_covariates(design, rng);
}

/// True score F(x, z) for one sample. `x` holds the expression row with pathway
/// blocks of `genesPerPathway` genes; `z` holds the five clinical features.
inline double score_function(Model model, const Eigen::Ref<const Eigen::VectorXd>& x,
                             const Eigen::Ref<const Eigen::VectorXd>& z, int genesPerPathway = 5) {
  if (z.size() < SimDesign::kClinical) throw DimensionError("score_function: five clinical features expected");
  const int p = genesPerPathway;
  // k-th gene (1-based) of pathway m (1-based)
  auto g = [&](int m, int k) { return x[(m - 1) * p + (k - 1)]; };
  const int needed = model == Model::M3 ? 8 : 3;
  if (x.size() < needed * p) throw DimensionError("score_function: expression row too short");
  switch (model) {
    case Model::M1:
      return 3 * z[0] - 4 * z[1] + 3 * z[2] + 2 * g(1, 1) + 3 * g(1, 2) + 3 * std::exp(0.5 * g(2, 1) + 0.5 * g(2, 2)) +
             4 * g(3, 1) * g(3, 2);
    case Model::M2: {
      const double a = g(2, 1), b = g(2, 2);
      return z[0] - 3 * z[1] + 3 * z[2] - z[3] + 6 * std::sin(0.5 * g(1, 1) + 0.5 * g(1, 2)) +
             2 * std::log(std::abs(a * a * a - b * b * b)) + 2 * (g(3, 1) * g(3, 1) - g(3, 2) * g(3, 2));
    }
    case Model::M3: {
      double acc = 0.0;
      for (int m = 1; m <= 8; ++m) acc += x.segment((m - 1) * p, p).norm();
      return z[0] + z[2] + 2 * acc;
    }
  }
  throw UsageError("unknown simulation model");
}

inline Eigen::VectorXd score_vector(Model model, const Covariates& c, int genesPerPathway = 5) {
  Eigen::VectorXd f(c.expression.rows());
  for (Eigen::Index i = 0; i < f.size(); ++i)
    f[i] = score_function(model, c.expression.row(i).transpose(), c.clinical.row(i).transpose(), genesPerPathway);
  return f;
}

inline double sample_variance(const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (v.size() < 2) return 0.0;
  return (v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1);
}

/// y = F + Normal(0, var(F) / 5)
inline Eigen::VectorXd gen_regression_outcome(const Eigen::Ref<const Eigen::VectorXd>& f, std::uint64_t seed) {
  const double var = sample_variance(f);
  if (!(var > 0.0)) throw DegenerateError("regression noise needs a non-constant score vector");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, std::sqrt(var / 5.0));
  Eigen::VectorXd y(f.size());
  for (Eigen::Index i = 0; i < f.size(); ++i) y[i] = f[i] + noise(rng);
  return y;
}

/// Inverse-CDF draw of a Weibull proportional-hazards time for uniform u in (0, 1).
inline double weibull_time(double f, double kappa, double rho, double u) {
  return std::pow(-std::log(u) / (kappa * std::exp(f)), 1.0 / rho);
}

namespace detail {

inline double median(std::vector<double> v) {
  const std::size_t n = v.size();
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n / 2), v.end());
  const double hi = v[n / 2];
  if (n % 2 == 1) return hi;
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n / 2)));
}

inline double open_uniform(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double u = 0.0;
  while (u == 0.0) u = unif(rng);
  return u;
}

}  // namespace detail

/// Median over samples of the per-sample population median survival time.
inline double analytic_median(const Eigen::Ref<const Eigen::VectorXd>& f, double kappa, double rho) {
  std::vector<double> m(static_cast<std::size_t>(f.size()));
  for (Eigen::Index i = 0; i < f.size(); ++i) m[static_cast<std::size_t>(i)] = weibull_time(f[i], kappa, rho, 0.5);
  return detail::median(std::move(m));
}

/// kappa such that analytic_median(F, kappa, rho) = targetMedian, by bisection
/// on log(kappa) to 1e-8 relative.
inline double calibrate_weibull(const Eigen::Ref<const Eigen::VectorXd>& f, double targetMedian, double rho = 1.0) {
  if (!(rho > 0.0) || !(targetMedian > 0.0)) throw UsageError("calibrate_weibull: parameters must be positive");
  if (f.size() == 0) throw DimensionError("calibrate_weibull: empty score vector");
  double lo = -50.0, hi = 50.0;  // log kappa; the median decreases in kappa
  while (analytic_median(f, std::exp(lo), rho) < targetMedian) lo -= 50.0;
  while (analytic_median(f, std::exp(hi), rho) > targetMedian) hi += 50.0;
  while (hi - lo > 1e-10) {
    const double mid = 0.5 * (lo + hi);
    if (analytic_median(f, std::exp(mid), rho) > targetMedian) lo = mid;
    else hi = mid;
  }
  return std::exp(0.5 * (lo + hi));
}

/// Survival times by inversion; round(censorFraction * N) samples chosen at
/// random are censored at a Uniform(0, t) time.
inline SurvivalOutcome gen_survival_outcome(const Eigen::Ref<const Eigen::VectorXd>& f, double kappa, double rho,
                                            double censorFraction, std::uint64_t seed) {
  if (!(kappa > 0.0) || !(rho > 0.0)) throw UsageError("Weibull parameters must be positive");
  if (!(censorFraction >= 0.0 && censorFraction < 1.0)) throw UsageError("censor fraction must lie in [0, 1)");
  const Eigen::Index n = f.size();
  std::mt19937_64 rng(seed);
  SurvivalOutcome s;
  s.time.resize(n);
  s.event = Eigen::VectorXi::Ones(n);
  for (Eigen::Index i = 0; i < n; ++i) s.time[i] = weibull_time(f[i], kappa, rho, detail::open_uniform(rng));

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  const auto censored = static_cast<std::size_t>(std::llround(censorFraction * static_cast<double>(n)));
  for (std::size_t k = 0; k < censored; ++k) {
    const Eigen::Index i = order[k];
    s.event[i] = 0;
    s.time[i] *= detail::open_uniform(rng);
  }
  return s;
}

struct SimulatedData {
  SimDesign design;
  ExpressionDataset data;
  PathwayCollection pathways;
  Eigen::VectorXd trueScore;
  std::vector<int> informative;  // 1-based pathway indices
  double kappa = 0.0;            // survival only
};

inline std::string gene_name(int pathway, int gene) {
  return "P" + std::to_string(pathway) + "_G" + std::to_string(gene);
}

inline std::string pathway_name(int pathway) { return "PATHWAY_" + std::to_string(pathway); }

inline SimulatedData simulate(const SimDesign& design) {
  design.validate();
  std::mt19937_64 rng(design.seed);
  const Covariates cov = gen_covariates(design, rng);
  const std::uint64_t outcomeSeed = rng();

  SimulatedData out;
  out.design = design;
  out.informative = design.informative_pathways();
  out.trueScore = score_vector(design.model, cov, design.genesPerPathway);

  ExpressionDataset& d = out.data;
  const int n = design.sampleSize;
  for (int i = 1; i <= n; ++i) d.sampleIds.push_back("S" + std::to_string(i));
  for (int m = 1; m <= design.pathwayCount; ++m) {
    Pathway p;
    p.name = pathway_name(m);
    p.description = "simulated";
    for (int k = 1; k <= design.genesPerPathway; ++k) {
      d.genes.push_back(gene_name(m, k));
      p.genes.push_back(gene_name(m, k));
    }
    out.pathways.push_back(std::move(p));
  }
  d.expression = cov.expression;
  d.clinical = cov.clinical;
  for (int j = 1; j <= SimDesign::kClinical; ++j) d.clinicalNames.push_back("z" + std::to_string(j));

  if (design.outcomeType == OutcomeType::Regression) {
    d.outcome = RegressionOutcome{gen_regression_outcome(out.trueScore, outcomeSeed)};
  } else {
    out.kappa = calibrate_weibull(out.trueScore, design.targetMedian, design.weibullShape);
    d.outcome = gen_survival_outcome(out.trueScore, out.kappa, design.weibullShape, design.censorFraction, outcomeSeed);
  }
  return out;
}

}  // namespace pkb::sim
