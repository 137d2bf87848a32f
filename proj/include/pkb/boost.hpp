#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "pkb/dataset.hpp"
#include "pkb/errors.hpp"
#include "pkb/increment.hpp"
#include "pkb/kernel.hpp"
#include "pkb/log.hpp"
#include "pkb/loss.hpp"

namespace pkb {

struct BoostConfig {
  double learningRate = 0.05;
  PenaltyKind penalty = PenaltyKind::L2;
  double penaltyMultiplier = 1.0;
  KernelSpec kernel;
  int maxIterations = 1500;
  int cvPatience = 50;
  int folds = 3;
  std::uint64_t seed = 0;
  double maxStep = 100.0;

  void validate() const {
    if (!(learningRate > 0.0 && learningRate < 1.0)) throw UsageError("learning rate must lie in (0, 1)");
    if (!(penaltyMultiplier > 0.0) || !std::isfinite(penaltyMultiplier))
      throw UsageError("penalty multiplier must be positive");
    if (maxIterations < 1) throw UsageError("max iterations must be positive");
    if (cvPatience < 1) throw UsageError("CV patience must be >= 1");
    if (folds < 2) throw UsageError("at least two CV folds are required");
    if (!(maxStep > 0.0)) throw UsageError("maximum line-search step must be positive");
    kernel.validate();
  }
};

struct IterationRecord {
  int iteration = 0;
  int pathway = -1;  // -1 for the initial constant model
  double step = 0.0;
  double trainLoss = 0.0;
  double cvLoss = std::numeric_limits<double>::quiet_NaN();
};

struct PathwayModel {
  std::string name;
  std::vector<std::string> genes;
  Eigen::VectorXd geneWeights;
  Eigen::MatrixXd trainingExpression;  // training samples x pathway genes
  Eigen::VectorXd beta;                // accumulated dual coefficients
};

struct FittedModel {
  OutcomeType outcomeType = OutcomeType::Regression;
  BoostConfig config;
  double lambdaAuto = 0.0;
  double lambda = 0.0;
  double f0 = 0.0;
  int iterations = 0;
  std::vector<std::string> trainingSamples;
  std::vector<PathwayModel> pathways;
  ClinicalTransform clinical;
  Eigen::VectorXd gamma;
  std::vector<IterationRecord> trace;  // entry t describes F_t
  std::vector<double> cvCurve;         // averaged held-out loss per iteration
  Eigen::VectorXd trainingScores;      // F_T on the training samples
};

/// Constant minimizing the empirical loss: mean(y), log(n+/n-), or 0 for survival.
inline double initialize_f0(const Outcome& outcome) {
  return std::visit(
      [](const auto& o) -> double {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, RegressionOutcome>) {
          if (o.y.size() == 0) throw DimensionError("empty outcome");
          return o.y.mean();
        } else if constexpr (std::is_same_v<T, ClassificationOutcome>) {
          double pos = 0, neg = 0;
          for (Eigen::Index i = 0; i < o.label.size(); ++i) (o.label[i] > 0 ? pos : neg) += 1.0;
          if (pos == 0 || neg == 0) throw DegenerateError("classification outcome has a single class");
          return std::log(pos / neg);
        } else {
          return 0.0;
        }
      },
      outcome);
}

/// Step length d in [0, maxStep] minimizing L(F + d f). Exact for squared
/// error; golden-section search to 1e-6 otherwise. Never increases the loss.
inline double line_search(const Outcome& outcome, const Eigen::Ref<const Eigen::VectorXd>& f,
                          const Eigen::Ref<const Eigen::VectorXd>& dir, double maxStep = 100.0) {
  if (dir.size() != f.size()) throw DimensionError("line search: direction length mismatch");
  if (!dir.allFinite()) throw NumericError("line search: direction has non-finite entries");
  if (dir.squaredNorm() == 0.0) return 0.0;

  if (const auto* reg = std::get_if<RegressionOutcome>(&outcome)) {
    const double d = (reg->y - f).dot(dir) / dir.squaredNorm();
    return std::clamp(d, 0.0, maxStep);
  }

  auto loss = [&](double d) { return empirical_loss(outcome, f + d * dir); };
  const double invPhi = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = 0.0, hi = maxStep;
  double x1 = hi - invPhi * (hi - lo), x2 = lo + invPhi * (hi - lo);
  double l1 = loss(x1), l2 = loss(x2);
  while (hi - lo > 1e-6) {
    if (l1 <= l2) {
      hi = x2;
      x2 = x1;
      l2 = l1;
      x1 = hi - invPhi * (hi - lo);
      l1 = loss(x1);
    } else {
      lo = x1;
      x1 = x2;
      l1 = l2;
      x2 = lo + invPhi * (hi - lo);
      l2 = loss(x2);
    }
  }
  const double d = 0.5 * (lo + hi);
  const double base = loss(0.0);
  double best = d, bestLoss = loss(d);
  if (loss(maxStep) < bestLoss) {
    best = maxStep;
    bestLoss = loss(maxStep);
  }
  return bestLoss <= base ? best : 0.0;
}

/// Fold index per sample. Samples are grouped by class (classification) or
/// event status (survival), shuffled with `seed`, and dealt round-robin.
inline std::vector<int> assign_folds(const Outcome& outcome, int folds, std::uint64_t seed) {
  const Eigen::Index n = outcome_size(outcome);
  std::map<int, std::vector<Eigen::Index>> strata;
  for (Eigen::Index i = 0; i < n; ++i) {
    int key = 0;
    if (const auto* c = std::get_if<ClassificationOutcome>(&outcome)) key = c->label[i] > 0 ? 1 : 0;
    else if (const auto* s = std::get_if<SurvivalOutcome>(&outcome)) key = s->event[i];
    strata[key].push_back(i);
  }
  std::mt19937_64 rng(seed);
  std::vector<int> fold(static_cast<std::size_t>(n), 0);
  std::size_t offset = 0;
  for (auto& [key, members] : strata) {
    std::shuffle(members.begin(), members.end(), rng);
    for (auto i : members) fold[static_cast<std::size_t>(i)] = static_cast<int>(offset++ % static_cast<std::size_t>(folds));
  }
  return fold;
}

namespace detail {

inline std::vector<Eigen::Index> rows_where(const std::vector<int>& fold, int k, bool equal) {
  std::vector<Eigen::Index> out;
  for (std::size_t i = 0; i < fold.size(); ++i)
    if ((fold[i] == k) == equal) out.push_back(static_cast<Eigen::Index>(i));
  return out;
}

inline Eigen::MatrixXd take(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& rows,
                            const std::vector<Eigen::Index>& cols) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j)
    for (std::size_t i = 0; i < rows.size(); ++i)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m(rows[i], cols[j]);
  return out;
}

inline Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

/// Held-out loss; undefined (nullopt) for a survival fold without events.
inline std::optional<double> heldout_loss(const Outcome& o, const Eigen::VectorXd& f) {
  if (const auto* s = std::get_if<SurvivalOutcome>(&o))
    if (s->event.sum() == 0) return std::nullopt;
  return empirical_loss(o, f);
}

/// One boosting process over a fixed training set, optionally tracking
/// scores on a held-out set.
class BoostRun {
 public:
  BoostRun(const IncrementSolver& solver, Outcome outcome, double learningRate, double lambda, double maxStep)
      : solver_(solver), outcome_(std::move(outcome)), lr_(learningRate), lambda_(lambda), maxStep_(maxStep) {
    f0_ = initialize_f0(outcome_);
    f_ = Eigen::VectorXd::Constant(solver_.samples(), f0_);
    beta_.assign(solver_.pathways(), Eigen::VectorXd::Zero(solver_.samples()));
    gamma_ = Eigen::VectorXd::Zero(solver_.clinical().cols());
    loss_ = empirical_loss(outcome_, f_);
  }

  void track_heldout(std::vector<Eigen::MatrixXd> crossKernels, Eigen::MatrixXd z, Outcome outcome) {
    crossKernels_ = std::move(crossKernels);
    heldoutZ_ = std::move(z);
    heldout_ = std::move(outcome);
    heldoutF_ = Eigen::VectorXd::Constant(outcome_size(*heldout_), f0_);
  }

  IterationRecord step(int iteration) {
    const LossDerivatives d = derivatives(outcome_, f_);
    IncrementSolution sol = solver_.solve(d, lambda_, solver_.options().penalty == PenaltyKind::L1 ? &warm_ : nullptr);
    const double step = line_search(outcome_, f_, sol.fitted, maxStep_);
    const double scale = lr_ * step;
    const auto m = static_cast<std::size_t>(sol.pathwayIndex);
    if (scale != 0.0) {
      f_.noalias() += scale * sol.fitted;
      beta_[m].noalias() += scale * sol.beta;
      if (gamma_.size() > 0) gamma_.noalias() += scale * sol.gamma;
      if (heldout_) {
        Eigen::VectorXd inc = crossKernels_[m] * sol.beta;
        if (heldoutZ_.cols() > 0) inc += heldoutZ_ * sol.gamma;
        heldoutF_.noalias() += scale * inc;
      }
    }
    loss_ = empirical_loss(outcome_, f_);
    IterationRecord rec;
    rec.iteration = iteration;
    rec.pathway = sol.pathwayIndex;
    rec.step = step;
    rec.trainLoss = loss_;
    return rec;
  }

  double f0() const { return f0_; }
  double train_loss() const { return loss_; }
  std::optional<double> heldout_loss() const {
    return heldout_ ? detail::heldout_loss(*heldout_, heldoutF_) : std::nullopt;
  }
  const Eigen::VectorXd& scores() const { return f_; }
  const std::vector<Eigen::VectorXd>& beta() const { return beta_; }
  const Eigen::VectorXd& gamma() const { return gamma_; }

 private:
  const IncrementSolver& solver_;
  Outcome outcome_;
  double lr_, lambda_, maxStep_;
  double f0_ = 0.0, loss_ = 0.0;
  Eigen::VectorXd f_;
  std::vector<Eigen::VectorXd> beta_;
  Eigen::VectorXd gamma_;
  std::vector<Eigen::VectorXd> warm_;
  std::vector<Eigen::MatrixXd> crossKernels_;
  Eigen::MatrixXd heldoutZ_;
  std::optional<Outcome> heldout_;
  Eigen::VectorXd heldoutF_;
};

}  // namespace detail

struct CrossValidationResult {
  int iterations = 0;  // T: argmin of the averaged held-out loss
  double bestLoss = std::numeric_limits<double>::infinity();
  std::vector<double> curve;                             // index = iteration
  std::vector<std::vector<IterationRecord>> foldTraces;  // per fold, per iteration
};

struct ProblemOptions {
  int folds = 3;
  std::uint64_t seed = 0;
  /// Overrides the seeded stratified assignment when non-empty.
  std::vector<int> foldAssignment;
  int threads = default_thread_count();
};

/// Everything about a fit that does not depend on the learning rate or the
/// penalty multiplier: resolved pathways, standardized clinical matrix, kernel
/// matrices, fold assignment and the per-fold increment solvers. Shared across
/// the cells of a tuning grid that use the same kernel.
class BoostProblem {
 public:
  static constexpr Eigen::Index kMinSamples = 10;
  static constexpr double kAutoLambdaFraction = 0.05;

  BoostProblem(const ExpressionDataset& data, const PathwayCollection& pathways, const KernelSpec& kernel,
               PenaltyKind penalty, ProblemOptions opt = {})
      : data_(data), kernel_(kernel), penalty_(penalty), opt_(std::move(opt)) {
    data_.validate();
    kernel_.validate();
    const Eigen::Index n = data_.samples();
    if (n < kMinSamples) throw DataError("at least " + std::to_string(kMinSamples) + " samples are required");
    if (const auto* s = std::get_if<SurvivalOutcome>(&data_.outcome)) {
      detail::check_survival(*s);
    }
    if (const auto* c = std::get_if<ClassificationOutcome>(&data_.outcome)) {
      for (Eigen::Index i = 0; i < c->label.size(); ++i)
        if (c->label[i] != 1.0 && c->label[i] != -1.0) throw DataError("classification labels must be -1 or +1");
      initialize_f0(data_.outcome);
    }

    for (const auto& p : pathways) {
      try {
        resolved_.push_back(resolve_pathway(p.name, p.genes, data_.genes, kernel_));
      } catch (const EmptyPathwayError& e) {
        warn(std::string(e.what()) + "; pathway dropped");
      }
    }
    if (resolved_.empty()) throw DataError("no pathway has genes present in the expression data");

    clinical_ = ClinicalTransform::fit(data_.clinical, data_.clinicalNames);
    z_ = clinical_.apply(data_.clinical);

    kernels_.resize(resolved_.size());
    parallel_for(
        resolved_.size(),
        [&](std::size_t m) {
          const Eigen::MatrixXd x = select_columns(data_.expression, resolved_[m].columns);
          kernels_[m] = kernel_matrix(x, x, resolved_[m].weights, kernel_, true);
        },
        opt_.threads);

    if (!opt_.foldAssignment.empty()) {
      if (static_cast<Eigen::Index>(opt_.foldAssignment.size()) != n)
        throw DimensionError("fold assignment length differs from sample count");
      fold_ = opt_.foldAssignment;
      opt_.folds = *std::max_element(fold_.begin(), fold_.end()) + 1;
    } else {
      if (opt_.folds < 2) throw UsageError("at least two CV folds are required");
      fold_ = assign_folds(data_.outcome, opt_.folds, opt_.seed);
    }

    full_ = std::make_unique<IncrementSolver>(kernels_, z_, solver_options(n));
    for (int k = 0; k < opt_.folds; ++k) {
      const auto train = detail::rows_where(fold_, k, false);
      if (train.empty() || train.size() == fold_.size()) throw DataError("a CV fold is empty");
      std::vector<Eigen::MatrixXd> sub(kernels_.size());
      for (std::size_t m = 0; m < kernels_.size(); ++m) sub[m] = detail::take(kernels_[m], train, train);
      folds_.push_back(std::make_unique<IncrementSolver>(std::move(sub), detail::take_rows(z_, train),
                                                         solver_options(static_cast<Eigen::Index>(train.size()))));
    }
  }

  BoostProblem(const BoostProblem&) = delete;
  BoostProblem& operator=(const BoostProblem&) = delete;

  const std::vector<ResolvedPathway>& pathways() const { return resolved_; }
  const std::vector<Eigen::MatrixXd>& kernels() const { return kernels_; }
  const Eigen::MatrixXd& clinical() const { return z_; }
  const ClinicalTransform& clinical_transform() const { return clinical_; }
  const std::vector<int>& folds() const { return fold_; }
  const ExpressionDataset& data() const { return data_; }

  /// Penalty scale anchor, computed once at the initial constant model of the
  /// full training set. L1: 5% of the median over pathways of lambda_max, the
  /// smallest lambda with an all-zero solution. L2: the median over pathways
  /// of the largest eigenvalue of K~'K~.
  double auto_lambda() const {
    const double f0 = initialize_f0(data_.outcome);
    const LossDerivatives d = derivatives(data_.outcome, Eigen::VectorXd::Constant(data_.samples(), f0));
    const bool l1 = penalty_ == PenaltyKind::L1;
    std::vector<double> sorted = l1 ? full_->lambda_max(d) : full_->gram_top_eigenvalue(d);
    const double fraction = l1 ? kAutoLambdaFraction : 1.0;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t k = sorted.size();
    double median = k % 2 == 1 ? sorted[k / 2] : 0.5 * (sorted[k / 2 - 1] + sorted[k / 2]);
    if (!(median > 0.0)) median = sorted.back();
    if (!(median > 0.0)) {
      warn("penalty anchor vanishes at the initial model; using lambda = 1");
      return 1.0;
    }
    return fraction * median;
  }

  /// Runs one boosting process per fold in lockstep and stops once the
  /// averaged held-out loss has not reached a new minimum for `patience`
  /// iterations.
  CrossValidationResult cross_validate(double learningRate, double lambda, int maxIterations, int patience,
                                       double maxStep = 100.0) const {
    std::vector<detail::BoostRun> runs;
    runs.reserve(folds_.size());
    for (int k = 0; k < opt_.folds; ++k) {
      const auto train = detail::rows_where(fold_, k, false);
      const auto held = detail::rows_where(fold_, k, true);
      runs.emplace_back(*folds_[static_cast<std::size_t>(k)], subset(data_.outcome, train), learningRate, lambda,
                        maxStep);
      std::vector<Eigen::MatrixXd> cross(kernels_.size());
      for (std::size_t m = 0; m < kernels_.size(); ++m) cross[m] = detail::take(kernels_[m], held, train);
      runs.back().track_heldout(std::move(cross), detail::take_rows(z_, held), subset(data_.outcome, held));
    }

    CrossValidationResult cv;
    cv.foldTraces.resize(runs.size());
    auto average = [&]() {
      double acc = 0.0;
      int used = 0;
      for (const auto& r : runs)
        if (auto l = r.heldout_loss()) {
          acc += *l;
          ++used;
        }
      if (used == 0) throw DegenerateError("no CV fold has a defined held-out loss");
      return acc / used;
    };
    for (std::size_t k = 0; k < runs.size(); ++k)
      cv.foldTraces[k].push_back({0, -1, 0.0, runs[k].train_loss(), runs[k].heldout_loss().value_or(NAN)});
    cv.curve.push_back(average());
    cv.bestLoss = cv.curve[0];
    cv.iterations = 0;

    for (int it = 1; it <= maxIterations; ++it) {
      for (std::size_t k = 0; k < runs.size(); ++k) {
        IterationRecord rec = runs[k].step(it);
        rec.cvLoss = runs[k].heldout_loss().value_or(NAN);
        cv.foldTraces[k].push_back(rec);
      }
      const double loss = average();
      cv.curve.push_back(loss);
      if (loss < cv.bestLoss) {
        cv.bestLoss = loss;
        cv.iterations = it;
      }
      if (it - cv.iterations >= patience) break;
    }
    return cv;
  }

  /// Boosts on the full training data for `iterations` steps.
  FittedModel refit(const BoostConfig& config, double lambdaAuto, int iterations,
                    const CrossValidationResult* cv = nullptr) const {
    const double lambda = config.penaltyMultiplier * lambdaAuto;
    detail::BoostRun run(*full_, data_.outcome, config.learningRate, lambda, config.maxStep);
    FittedModel model;
    model.outcomeType = outcome_type(data_.outcome);
    model.config = config;
    model.config.kernel = kernel_;
    model.config.penalty = penalty_;
    model.lambdaAuto = lambdaAuto;
    model.lambda = lambda;
    model.f0 = run.f0();
    model.iterations = iterations;
    model.trainingSamples = data_.sampleIds;
    model.clinical = clinical_;
    if (cv) model.cvCurve = cv->curve;
    auto cvAt = [&](int it) {
      return cv && it < static_cast<int>(cv->curve.size()) ? cv->curve[static_cast<std::size_t>(it)] : NAN;
    };
    model.trace.push_back({0, -1, 0.0, run.train_loss(), cvAt(0)});
    if (iterations == 0) warn("cross-validation selected 0 iterations; the model is the constant F0");
    for (int it = 1; it <= iterations; ++it) {
      IterationRecord rec = run.step(it);
      rec.cvLoss = cvAt(it);
      model.trace.push_back(rec);
    }
    model.gamma = run.gamma();
    model.trainingScores = run.scores();
    for (std::size_t m = 0; m < resolved_.size(); ++m) {
      PathwayModel pm;
      pm.name = resolved_[m].name;
      pm.genes = resolved_[m].genes;
      pm.geneWeights = resolved_[m].weights;
      pm.trainingExpression = select_columns(data_.expression, resolved_[m].columns);
      pm.beta = run.beta()[m];
      model.pathways.push_back(std::move(pm));
    }
    return model;
  }

 private:
  SolverOptions solver_options(Eigen::Index n) const {
    SolverOptions s;
    s.penalty = penalty_;
    s.threads = opt_.threads;
    if (std::holds_alternative<RegressionOutcome>(data_.outcome)) s.constantHessianScale = 2.0 / static_cast<double>(n);
    return s;
  }

  ExpressionDataset data_;
  KernelSpec kernel_;
  PenaltyKind penalty_;
  ProblemOptions opt_;
  std::vector<ResolvedPathway> resolved_;
  ClinicalTransform clinical_;
  Eigen::MatrixXd z_;
  std::vector<Eigen::MatrixXd> kernels_;
  std::vector<int> fold_;
  std::unique_ptr<IncrementSolver> full_;
  std::vector<std::unique_ptr<IncrementSolver>> folds_;
};

/// Cross-validates the number of iterations, then refits on all samples.
inline FittedModel fit(const ExpressionDataset& data, const PathwayCollection& pathways, const BoostConfig& config,
                       std::vector<int> foldAssignment = {}) {
  config.validate();
  ProblemOptions opt;
  opt.folds = config.folds;
  opt.seed = config.seed;
  opt.foldAssignment = std::move(foldAssignment);
  BoostProblem problem(data, pathways, config.kernel, config.penalty, opt);
  const double lambdaAuto = problem.auto_lambda();
  const CrossValidationResult cv = problem.cross_validate(config.learningRate, config.penaltyMultiplier * lambdaAuto,
                                                          config.maxIterations, config.cvPatience, config.maxStep);
  return problem.refit(config, lambdaAuto, cv.iterations, &cv);
}

/// F_T(x, z) for new samples. Pathways with zero weight are skipped, so their
/// genes need not be present.
inline Eigen::VectorXd predict(const FittedModel& model, const Eigen::Ref<const Eigen::MatrixXd>& expression,
                               const std::vector<std::string>& genes, const Eigen::Ref<const Eigen::MatrixXd>& clinical,
                               const std::vector<std::string>& clinicalNames) {
  if (static_cast<Eigen::Index>(genes.size()) != expression.cols())
    throw DimensionError("gene names do not match expression columns");
  const Eigen::Index n = expression.rows();
  Eigen::VectorXd f = Eigen::VectorXd::Constant(n, model.f0);
  std::unordered_map<std::string, Eigen::Index> index;
  for (std::size_t i = 0; i < genes.size(); ++i) index.emplace(genes[i], static_cast<Eigen::Index>(i));
  for (const auto& p : model.pathways) {
    if (p.beta.size() == 0 || p.beta.cwiseAbs().maxCoeff() == 0.0) continue;
    std::vector<Eigen::Index> cols;
    for (const auto& g : p.genes) {
      auto it = index.find(g);
      if (it == index.end()) throw SchemaError("prediction data lacks gene '" + g + "' (pathway '" + p.name + "')");
      cols.push_back(it->second);
    }
    f.noalias() += kernel_matrix(select_columns(expression, cols), p.trainingExpression, p.geneWeights,
                                 model.config.kernel) *
                   p.beta;
  }
  if (model.clinical.columns() > 0) {
    if (clinical.rows() != n) throw SchemaError("clinical rows differ from expression rows");
    f.noalias() += model.clinical.apply_by_name(clinical, clinicalNames) * model.gamma;
  }
  return f;
}

/// Regression: the score; classification: P(y = +1); survival: relative risk exp(score).
inline double score_to_prediction(OutcomeType type, double score) {
  switch (type) {
    case OutcomeType::Regression: return score;
    case OutcomeType::Classification: return 1.0 / (1.0 + std::exp(-score));
    case OutcomeType::Survival: return std::exp(score);
  }
  return score;
}

/// w_m = ||beta^(m)||_2 keyed by pathway name.
inline std::map<std::string, double> pathway_weights(const FittedModel& model) {
  std::map<std::string, double> out;
  for (const auto& p : model.pathways) out[p.name] = p.beta.norm();
  return out;
}

struct TuneGrid {
  std::vector<KernelSpec> kernels{KernelSpec::rbf(), KernelSpec::polynomial(3)};
  std::vector<double> learningRates{0.01, 0.05};
  std::vector<double> penaltyMultipliers{0.04, 0.2, 1.0};
};

struct TuneCell {
  BoostConfig config;
  int iterations = 0;
  double cvLoss = std::numeric_limits<double>::infinity();
};

struct TuneResult {
  std::vector<TuneCell> cells;
  std::size_t best = 0;
  FittedModel model;  // best cell refit on all samples
};

/// Cross-validates every grid cell on the same folds and refits the cell with
/// the lowest averaged held-out loss (first cell on ties).
inline TuneResult tune(const ExpressionDataset& data, const PathwayCollection& pathways, const BoostConfig& base,
                       const TuneGrid& grid = {}) {
  base.validate();
  if (grid.kernels.empty() || grid.learningRates.empty() || grid.penaltyMultipliers.empty())
    throw UsageError("tuning grid has an empty axis");
  TuneResult result;
  std::optional<FittedModel> bestModel;
  for (const auto& kernel : grid.kernels) {
    KernelSpec k = kernel;
    if (k.geneWeights.empty()) k.geneWeights = base.kernel.geneWeights;
    ProblemOptions opt;
    opt.folds = base.folds;
    opt.seed = base.seed;
    BoostProblem problem(data, pathways, k, base.penalty, opt);
    const double lambdaAuto = problem.auto_lambda();
    for (double lr : grid.learningRates) {
      for (double mult : grid.penaltyMultipliers) {
        TuneCell cell;
        cell.config = base;
        cell.config.kernel = k;
        cell.config.learningRate = lr;
        cell.config.penaltyMultiplier = mult;
        cell.config.validate();
        const auto cv =
            problem.cross_validate(lr, mult * lambdaAuto, base.maxIterations, base.cvPatience, base.maxStep);
        cell.iterations = cv.iterations;
        cell.cvLoss = cv.bestLoss;
        result.cells.push_back(cell);
        if (result.cells.size() == 1 || cell.cvLoss < result.cells[result.best].cvLoss) {
          result.best = result.cells.size() - 1;
          bestModel = problem.refit(cell.config, lambdaAuto, cv.iterations, &cv);
        }
      }
    }
  }
  result.model = std::move(*bestModel);
  return result;
}

}  // namespace pkb
