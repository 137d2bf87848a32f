#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pkb/errors.hpp"
#include "pkb/log.hpp"

namespace pkb {

enum class KernelKind { Rbf, Polynomial };

/// Kernel family plus optional per-gene weights. An empty weight map means
/// every gene carries the same weight.
struct KernelSpec {
  KernelKind kind = KernelKind::Rbf;
  int degree = 3;
  std::map<std::string, double> geneWeights;

  static KernelSpec rbf() { return {}; }
  static KernelSpec polynomial(int degree) {
    KernelSpec s;
    s.kind = KernelKind::Polynomial;
    s.degree = degree;
    return s;
  }

  /// Accepts "rbf" or "polyD" (e.g. "poly3").
  static KernelSpec parse(std::string_view name) {
    if (name == "rbf") return rbf();
    if (name.substr(0, 4) == "poly" && name.size() > 4) {
      int d = 0;
      for (char c : name.substr(4)) {
        if (c < '0' || c > '9') throw UsageError("unknown kernel '" + std::string(name) + "'");
        d = d * 10 + (c - '0');
      }
      KernelSpec s = polynomial(d);
      s.validate();
      return s;
    }
    throw UsageError("unknown kernel '" + std::string(name) + "'");
  }

  std::string name() const {
    return kind == KernelKind::Rbf ? std::string("rbf") : "poly" + std::to_string(degree);
  }

  void validate() const {
    if (kind == KernelKind::Polynomial && degree < 1)
      throw UsageError("polynomial kernel degree must be >= 1");
    for (const auto& [gene, w] : geneWeights)
      if (!(w >= 0.0) || !std::isfinite(w))
        throw DataError("gene weight for '" + gene + "' must be a finite nonnegative number");
  }

  bool weighted() const { return !geneWeights.empty(); }
};

namespace detail {

inline double weight_total(const Eigen::Ref<const Eigen::VectorXd>& w) {
  double total = 0.0;
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    if (!(w[j] >= 0.0)) throw DataError("kernel weights must be nonnegative");
    total += w[j];
  }
  if (!(total > 0.0)) throw DegenerateError("kernel weights sum to zero");
  return total;
}

inline void check_lengths(Eigen::Index u, Eigen::Index v, Eigen::Index w) {
  if (u != v || u != w) throw DimensionError("kernel arguments have mismatched lengths");
  if (u < 1) throw DimensionError("kernel arguments must be non-empty");
}

inline double int_pow(double base, int exponent) {
  double r = 1.0;
  for (int i = 0; i < exponent; ++i) r *= base;
  return r;
}

}  // namespace detail

/// exp(-sum_j w_j (u_j - v_j)^2 / sum_j w_j)
inline double rbf_kernel(const Eigen::Ref<const Eigen::VectorXd>& u,
                         const Eigen::Ref<const Eigen::VectorXd>& v,
                         const Eigen::Ref<const Eigen::VectorXd>& w) {
  detail::check_lengths(u.size(), v.size(), w.size());
  const double total = detail::weight_total(w);
  double acc = 0.0;
  for (Eigen::Index j = 0; j < u.size(); ++j) {
    const double diff = u[j] - v[j];
    acc += w[j] * diff * diff;
  }
  return std::exp(-acc / total);
}

/// (1 + sum_j w_j u_j v_j / sum_j w_j)^degree
inline double poly_kernel(const Eigen::Ref<const Eigen::VectorXd>& u,
                          const Eigen::Ref<const Eigen::VectorXd>& v,
                          const Eigen::Ref<const Eigen::VectorXd>& w, int degree) {
  detail::check_lengths(u.size(), v.size(), w.size());
  if (degree < 1) throw UsageError("polynomial kernel degree must be >= 1");
  const double total = detail::weight_total(w);
  double acc = 0.0;
  for (Eigen::Index j = 0; j < u.size(); ++j) acc += w[j] * u[j] * v[j];
  return detail::int_pow(1.0 + acc / total, degree);
}

struct KernelMatrix {
  Eigen::MatrixXd values;  // rows: evaluation samples, columns: reference samples
  std::string pathwayId;
};

/// Kernel between the rows of `eval` and the rows of `ref`, both already
/// restricted to one pathway's genes (columns aligned with `weights`).
inline Eigen::MatrixXd kernel_matrix(const Eigen::Ref<const Eigen::MatrixXd>& eval,
                                     const Eigen::Ref<const Eigen::MatrixXd>& ref,
                                     const Eigen::Ref<const Eigen::VectorXd>& weights,
                                     const KernelSpec& spec, bool symmetric = false) {
  if (eval.cols() != ref.cols() || eval.cols() != weights.size())
    throw DimensionError("kernel_matrix: gene dimensions disagree");
  if (eval.cols() == 0) throw EmptyPathwayError("kernel_matrix: pathway has no genes");
  if (spec.kind == KernelKind::Polynomial && spec.degree < 1)
    throw UsageError("polynomial kernel degree must be >= 1");
  symmetric = symmetric && eval.rows() == ref.rows();

  const Eigen::VectorXd w = weights / detail::weight_total(weights);
  const Eigen::Index n = eval.rows();
  const Eigen::Index m = ref.rows();
  const Eigen::Index p = eval.cols();
  // Row-major-friendly copies: each sample is contiguous.
  const Eigen::MatrixXd et = eval.transpose();
  const Eigen::MatrixXd rt = ref.transpose();

  Eigen::MatrixXd out(n, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const double* v = rt.col(j).data();
    const Eigen::Index start = symmetric ? j : 0;
    for (Eigen::Index i = start; i < n; ++i) {
      const double* u = et.col(i).data();
      double acc = 0.0;
      if (spec.kind == KernelKind::Rbf) {
        for (Eigen::Index g = 0; g < p; ++g) {
          const double d = u[g] - v[g];
          acc += w[g] * d * d;
        }
        out(i, j) = std::exp(-acc);
      } else {
        for (Eigen::Index g = 0; g < p; ++g) acc += w[g] * u[g] * v[g];
        out(i, j) = detail::int_pow(1.0 + acc, spec.degree);
      }
      if (symmetric) out(j, i) = out(i, j);
    }
  }
  return out;
}

/// Gene columns of a pathway after intersecting with the available gene index,
/// together with the matching kernel weights.
struct ResolvedPathway {
  std::string name;
  std::vector<std::string> genes;
  std::vector<Eigen::Index> columns;
  Eigen::VectorXd weights;
};

/// Maps pathway genes onto expression columns. Absent genes are dropped with
/// a warning; weights are looked up in `spec.geneWeights` (absent entries get 1).
inline ResolvedPathway resolve_pathway(const std::string& name,
                                       const std::vector<std::string>& pathwayGenes,
                                       const std::vector<std::string>& availableGenes,
                                       const KernelSpec& spec) {
  std::unordered_map<std::string, Eigen::Index> index;
  index.reserve(availableGenes.size());
  for (std::size_t i = 0; i < availableGenes.size(); ++i)
    index.emplace(availableGenes[i], static_cast<Eigen::Index>(i));

  ResolvedPathway out;
  out.name = name;
  std::size_t missing = 0;
  std::vector<double> w;
  for (const auto& g : pathwayGenes) {
    auto it = index.find(g);
    if (it == index.end()) {
      ++missing;
      continue;
    }
    out.genes.push_back(g);
    out.columns.push_back(it->second);
    double weight = 1.0;
    if (spec.weighted()) {
      auto wt = spec.geneWeights.find(g);
      if (wt != spec.geneWeights.end()) weight = wt->second;
    }
    w.push_back(weight);
  }
  if (missing > 0)
    warn("pathway '" + name + "': " + std::to_string(missing) + " of " +
         std::to_string(pathwayGenes.size()) + " genes absent from the expression data");
  if (out.columns.empty())
    throw EmptyPathwayError("pathway '" + name + "' has no genes present in the data");
  out.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
  detail::weight_total(out.weights);
  return out;
}

inline Eigen::MatrixXd select_columns(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                      const std::vector<Eigen::Index>& columns) {
  Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = x.col(columns[j]);
  return out;
}

/// Kernel matrix for one pathway between two sample sets that each carry their
/// own gene index.
inline KernelMatrix pathway_kernel(const Eigen::Ref<const Eigen::MatrixXd>& evalExpression,
                                   const std::vector<std::string>& evalGenes,
                                   const Eigen::Ref<const Eigen::MatrixXd>& refExpression,
                                   const std::vector<std::string>& refGenes,
                                   const std::string& pathwayId,
                                   const std::vector<std::string>& pathwayGenes,
                                   const KernelSpec& spec) {
  spec.validate();
  ResolvedPathway r = resolve_pathway(pathwayId, pathwayGenes, refGenes, spec);
  // Genes kept for the reference set must also exist in the evaluation set.
  ResolvedPathway e = resolve_pathway(pathwayId, r.genes, evalGenes, spec);
  if (e.genes.size() != r.genes.size())
    throw SchemaError("pathway '" + pathwayId + "': evaluation samples lack genes present in the reference set");
  const bool same = evalExpression.data() == refExpression.data() &&
                    evalExpression.rows() == refExpression.rows() && evalGenes == refGenes;
  return {kernel_matrix(select_columns(evalExpression, e.columns), select_columns(refExpression, r.columns),
                        r.weights, spec, same),
          pathwayId};
}

}  // namespace pkb
