#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>
#include <string>
#include <vector>

#include "pkb/pkb.hpp"

namespace pkb::testing {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::VectorXi;

inline VectorXd normal_vector(Eigen::Index n, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> d(0.0, sd);
  VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = d(rng);
  return v;
}

inline MatrixXd normal_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  MatrixXd m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = d(rng);
  return m;
}

inline MatrixXd random_spd(Eigen::Index n, std::mt19937_64& rng) {
  const MatrixXd a = normal_matrix(n, n, rng);
  MatrixXd h = a * a.transpose() / static_cast<double>(n);
  h.diagonal().array() += 0.1;
  return h;
}

/// Survival outcome with optional tied times; at least one event.
inline SurvivalOutcome random_survival(Eigen::Index n, std::mt19937_64& rng, bool ties) {
  SurvivalOutcome s;
  s.time.resize(n);
  s.event.resize(n);
  std::uniform_int_distribution<int> grid(1, std::max<int>(2, static_cast<int>(n) / 2));
  std::exponential_distribution<double> expo(0.2);
  std::bernoulli_distribution ev(0.7);
  for (Eigen::Index i = 0; i < n; ++i) {
    s.time[i] = ties ? static_cast<double>(grid(rng)) : expo(rng) + 1e-3;
    s.event[i] = ev(rng) ? 1 : 0;
  }
  s.event[0] = 1;
  return s;
}

inline Outcome random_outcome(OutcomeType type, Eigen::Index n, std::mt19937_64& rng, bool ties = false) {
  switch (type) {
    case OutcomeType::Regression: return RegressionOutcome{normal_vector(n, rng, 2.0)};
    case OutcomeType::Classification: {
      VectorXd l(n);
      std::bernoulli_distribution coin(0.5);
      for (Eigen::Index i = 0; i < n; ++i) l[i] = coin(rng) ? 1.0 : -1.0;
      l[0] = 1.0;
      if (n > 1) l[1] = -1.0;
      return ClassificationOutcome{l};
    }
    case OutcomeType::Survival: return random_survival(n, rng, ties);
  }
  return {};
}

/// Cox negative log partial likelihood written straight from its definition:
/// risk set of i = { j : t_j >= t_i }.
inline double cox_loss_bruteforce(const SurvivalOutcome& s, const VectorXd& f) {
  const Eigen::Index n = f.size();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (s.event[i] != 1) continue;
    double denom = 0.0;
    for (Eigen::Index j = 0; j < n; ++j)
      if (s.time[j] >= s.time[i]) denom += std::exp(f[j]);
    acc += f[i] - std::log(denom);
  }
  return -acc / static_cast<double>(n);
}

inline VectorXd fd_gradient(const Outcome& o, const VectorXd& f, double h = 1e-5) {
  VectorXd g(f.size());
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    VectorXd a = f, b = f;
    a[i] += h;
    b[i] -= h;
    g[i] = (empirical_loss(o, a) - empirical_loss(o, b)) / (2 * h);
  }
  return g;
}

inline MatrixXd fd_hessian(const Outcome& o, const VectorXd& f, double h = 1e-5) {
  MatrixXd out(f.size(), f.size());
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    VectorXd a = f, b = f;
    a[i] += h;
    b[i] -= h;
    out.col(i) = (derivatives(o, a).gradient - derivatives(o, b).gradient) / (2 * h);
  }
  return out;
}

inline double relative_error(const MatrixXd& approx, const MatrixXd& exact) {
  const double scale = std::max(exact.cwiseAbs().maxCoeff(), 1e-12);
  return (approx - exact).cwiseAbs().maxCoeff() / scale;
}

/// Concordance by the rule list, one pair at a time. Returns nothing for an
/// omitted pair.
inline std::optional<double> pair_concordance(double ti, int di, double fi, double tj, int dj, double fj) {
  if (ti > tj) {
    std::swap(ti, tj);
    std::swap(di, dj);
    std::swap(fi, fj);
  }
  // now ti <= tj
  if (ti < tj) {
    if (di == 0) return std::nullopt;
    if (fi == fj) return 0.5;
    return fi > fj ? 1.0 : 0.0;
  }
  if (di == 0 && dj == 0) return std::nullopt;
  if (di == 1 && dj == 1) return fi == fj ? 1.0 : 0.5;
  const double censoredRisk = di == 0 ? fi : fj;
  const double deadRisk = di == 0 ? fj : fi;
  return censoredRisk < deadRisk ? 1.0 : 0.0;
}

inline std::optional<double> c_index_by_rules(const VectorXd& t, const VectorXi& d, const VectorXd& f) {
  double total = 0.0;
  long pairs = 0;
  for (Eigen::Index j = 1; j < t.size(); ++j)
    for (Eigen::Index i = 0; i < j; ++i)
      if (auto c = pair_concordance(t[i], d[i], f[i], t[j], d[j], f[j])) {
        total += *c;
        ++pairs;
      }
  if (pairs == 0) return std::nullopt;
  return total / static_cast<double>(pairs);
}

/// Small random instance of the per-pathway second-order subproblem.
struct ReductionInstance {
  MatrixXd h;
  MatrixXd z;
  MatrixXd k;
  VectorXd grad;
  double lambda = 0.0;
};

inline ReductionInstance random_reduction_instance(std::mt19937_64& rng, Eigen::Index n, Eigen::Index q) {
  ReductionInstance r;
  r.h = random_spd(n, rng);
  r.z = normal_matrix(n, q, rng);
  const MatrixXd x = normal_matrix(n, 3, rng);
  std::bernoulli_distribution coin(0.5);
  r.k = kernel_matrix(x, x, VectorXd::Ones(3), coin(rng) ? KernelSpec::rbf() : KernelSpec::polynomial(2), true);
  r.grad = normal_vector(n, rng);
  std::uniform_real_distribution<double> logLambda(-3.0, 0.0);
  r.lambda = std::pow(10.0, logLambda(rng));
  return r;
}

/// 1/2 (K b + Z g + H^-1 grad)' H (K b + Z g + H^-1 grad) + lambda Omega(b), evaluated directly.
inline double eq3_objective(const ReductionInstance& r, const VectorXd& beta, const VectorXd& gamma, PenaltyKind kind) {
  VectorXd v = r.k * beta + r.h.fullPivLu().solve(r.grad);
  if (r.z.cols() > 0) v += r.z * gamma;
  const double pen = kind == PenaltyKind::L1 ? beta.lpNorm<1>() : beta.squaredNorm();
  return 0.5 * v.dot(r.h * v) + r.lambda * pen;
}

/// L2 optimum from the stacked stationarity conditions in (beta, gamma).
inline double l2_oracle(const ReductionInstance& r) {
  const Eigen::Index n = r.k.cols(), q = r.z.cols();
  MatrixXd a(n + q, n + q);
  VectorXd b(n + q);
  MatrixXd big(r.k.rows(), n + q);
  big << r.k, r.z;
  a = big.transpose() * r.h * big;
  a.topLeftCorner(n, n).diagonal().array() += 2.0 * r.lambda;
  b = -big.transpose() * r.grad;
  const VectorXd x = a.fullPivLu().solve(b);
  return eq3_objective(r, x.head(n), x.tail(q), PenaltyKind::L2);
}

/// L1 optimum by accelerated proximal gradient on (beta, gamma) with the
/// soft-threshold acting on beta only.
inline double l1_oracle(const ReductionInstance& r, int iterations = 200000) {
  const Eigen::Index n = r.k.cols(), q = r.z.cols();
  MatrixXd a(r.k.rows(), n + q);
  a << r.k, r.z;
  const MatrixXd g = a.transpose() * r.h * a;
  const VectorXd c = a.transpose() * r.grad;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(g, Eigen::EigenvaluesOnly);
  const double step = 1.0 / es.eigenvalues().maxCoeff();
  auto objective = [&](const VectorXd& x) {
    return 0.5 * x.dot(g * x) + c.dot(x) + r.lambda * x.head(n).lpNorm<1>();
  };
  VectorXd x = VectorXd::Zero(n + q), y = x, prev = x;
  double t = 1.0, last = objective(x);
  for (int it = 0; it < iterations; ++it) {
    VectorXd next = y - step * (g * y + c);
    for (Eigen::Index j = 0; j < n; ++j) {
      const double v = next[j];
      next[j] = v > step * r.lambda ? v - step * r.lambda : (v < -step * r.lambda ? v + step * r.lambda : 0.0);
    }
    const double value = objective(next);
    if (value > last) {  // adaptive restart
      t = 1.0;
      y = x;
      continue;
    }
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    prev = x;
    x = next;
    y = x + ((t - 1.0) / tn) * (x - prev);
    t = tn;
    last = value;
  }
  return eq3_objective(r, x.head(n), x.tail(q), PenaltyKind::L1);
}

/// transform -> solve_beta -> recover_gamma, scored by the direct objective.
inline double reduction_pipeline(const ReductionInstance& r, PenaltyKind kind, VectorXd* betaOut = nullptr,
                                 VectorXd* gammaOut = nullptr) {
  const Hessian h = Hessian::full(r.h);
  const auto t = transform(h, r.z, r.grad, r.k);
  const VectorXd beta = solve_beta(t.etaTilde, t.kTilde, Penalty{kind, r.lambda});
  const VectorXd gamma = recover_gamma(h, r.z, r.k, beta, r.grad);
  if (betaOut) *betaOut = beta;
  if (gammaOut) *gammaOut = gamma;
  return eq3_objective(r, beta, gamma, kind);
}

/// Ridge regression on raw features with an unpenalized intercept; the
/// penalty is picked by 3-fold CV over 100 log-spaced values in [0.1, 1000].
struct RidgeBaseline {
  double alpha = 0.0;
  VectorXd mean;
  VectorXd coef;
  double intercept = 0.0;

  static void solve(const MatrixXd& x, const VectorXd& y, double a, VectorXd& mu, VectorXd& b, double& b0) {
    mu = x.colwise().mean();
    const MatrixXd xc = x.rowwise() - mu.transpose();
    MatrixXd g = xc.transpose() * xc;
    g.diagonal().array() += a;
    b0 = y.mean();
    b = g.llt().solve(xc.transpose() * (y.array() - b0).matrix());
  }

  static RidgeBaseline fit(const MatrixXd& x, const VectorXd& y) {
    const Eigen::Index n = x.rows();
    RidgeBaseline best;
    double bestLoss = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 100; ++k) {
      const double a = std::pow(10.0, -1.0 + 4.0 * k / 99.0);
      double loss = 0.0;
      for (int fold = 0; fold < 3; ++fold) {
        std::vector<Eigen::Index> tr, te;
        for (Eigen::Index i = 0; i < n; ++i) (i % 3 == fold ? te : tr).push_back(i);
        MatrixXd xa(static_cast<Eigen::Index>(tr.size()), x.cols());
        VectorXd ya(static_cast<Eigen::Index>(tr.size()));
        for (std::size_t i = 0; i < tr.size(); ++i) {
          xa.row(static_cast<Eigen::Index>(i)) = x.row(tr[i]);
          ya[static_cast<Eigen::Index>(i)] = y[tr[i]];
        }
        VectorXd mu, b;
        double b0;
        solve(xa, ya, a, mu, b, b0);
        for (auto i : te) {
          const double r = y[i] - b0 - (x.row(i) - mu.transpose()).dot(b);
          loss += r * r;
        }
      }
      if (loss < bestLoss) {
        bestLoss = loss;
        best.alpha = a;
      }
    }
    solve(x, y, best.alpha, best.mean, best.coef, best.intercept);
    return best;
  }

  VectorXd predict(const MatrixXd& x) const {
    return ((x.rowwise() - mean.transpose()) * coef).array() + intercept;
  }
};

/// First `train` samples of a simulated dataset, the rest held out.
struct Split {
  ExpressionDataset train;
  MatrixXd testExpression;
  MatrixXd testClinical;
  Outcome testOutcome;
  VectorXd testTrueScore;
};

inline Split split_head(const sim::SimulatedData& s, Eigen::Index train) {
  const ExpressionDataset& d = s.data;
  const Eigen::Index n = d.samples();
  std::vector<Eigen::Index> a(static_cast<std::size_t>(train)), b(static_cast<std::size_t>(n - train));
  std::iota(a.begin(), a.end(), Eigen::Index{0});
  std::iota(b.begin(), b.end(), train);
  Split out;
  out.train.genes = d.genes;
  out.train.clinicalNames = d.clinicalNames;
  out.train.sampleIds.assign(d.sampleIds.begin(), d.sampleIds.begin() + train);
  out.train.expression = d.expression.topRows(train);
  out.train.clinical = d.clinical.topRows(train);
  out.train.outcome = subset(d.outcome, a);
  out.testExpression = d.expression.bottomRows(n - train);
  out.testClinical = d.clinical.bottomRows(n - train);
  out.testOutcome = subset(d.outcome, b);
  out.testTrueScore = s.trueScore.tail(n - train);
  return out;
}

/// Pathway names ordered by decreasing weight.
inline std::vector<std::string> ranked_pathways(const FittedModel& m) {
  std::vector<std::pair<std::string, double>> w;
  for (const auto& p : m.pathways) w.emplace_back(p.name, p.beta.norm());
  std::stable_sort(w.begin(), w.end(), [](const auto& x, const auto& y) { return x.second > y.second; });
  std::vector<std::string> out;
  for (const auto& [name, v] : w) out.push_back(name);
  return out;
}

inline bool top_k_are(const std::vector<std::string>& ranked, const std::vector<int>& informative) {
  if (ranked.size() < informative.size()) return false;
  for (std::size_t k = 0; k < informative.size(); ++k) {
    const std::string& name = ranked[k];
    bool found = false;
    for (int m : informative) found = found || name == sim::pathway_name(m);
    if (!found) return false;
  }
  return true;
}

/// Runs a shell command, capturing stdout+stderr; returns the exit status.
inline int run_command(const std::string& cmd, std::string* output = nullptr) {
  const std::filesystem::path log = std::filesystem::temp_directory_path() /
                                    ("pkb_cmd_" + std::to_string(std::random_device{}()) + ".log");
  const int raw = std::system((cmd + " > '" + log.string() + "' 2>&1").c_str());
  if (output) {
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    *output = ss.str();
  }
  std::filesystem::remove(log);
  if (raw == -1) return -1;
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("pkb_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace pkb::testing
