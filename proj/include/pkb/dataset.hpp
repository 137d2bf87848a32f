#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "pkb/errors.hpp"
#include "pkb/log.hpp"
#include "pkb/loss.hpp"

namespace pkb {

struct Pathway {
  std::string name;
  std::string description;
  std::vector<std::string> genes;
};

using PathwayCollection = std::vector<Pathway>;

/// Samples in rows. `clinical` holds numeric (already one-hot encoded) columns.
struct ExpressionDataset {
  std::vector<std::string> sampleIds;
  std::vector<std::string> genes;
  Eigen::MatrixXd expression;
  std::vector<std::string> clinicalNames;
  Eigen::MatrixXd clinical;
  Outcome outcome;

  Eigen::Index samples() const { return expression.rows(); }

  void validate() const {
    const Eigen::Index n = expression.rows();
    if (static_cast<Eigen::Index>(genes.size()) != expression.cols())
      throw DimensionError("gene names do not match expression columns");
    if (!sampleIds.empty() && static_cast<Eigen::Index>(sampleIds.size()) != n)
      throw DimensionError("sample ids do not match expression rows");
    if (clinical.size() > 0 && clinical.rows() != n) throw DimensionError("clinical rows differ from expression rows");
    if (static_cast<Eigen::Index>(clinicalNames.size()) != clinical.cols())
      throw DimensionError("clinical names do not match clinical columns");
    if (outcome_size(outcome) != n) throw DimensionError("outcome length differs from expression rows");
    if (!expression.allFinite()) throw DataError("expression matrix has non-finite values");
    if (clinical.size() > 0 && !clinical.allFinite()) throw DataError("clinical matrix has missing values");
  }
};

/// Standardizes clinical columns and drops columns that are constant or
/// (numerically) in the span of the columns kept before them. Applied
/// identically at prediction time.
struct ClinicalTransform {
  std::vector<std::string> names;   // retained columns, in order
  std::vector<Eigen::Index> source; // column index in the matrix seen by fit()
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static constexpr double kCollinearity = 1e-10;

  static ClinicalTransform fit(const Eigen::Ref<const Eigen::MatrixXd>& z, const std::vector<std::string>& colNames) {
    ClinicalTransform t;
    const Eigen::Index n = z.rows();
    std::vector<double> means, scales;
    Eigen::MatrixXd kept(n, 0);
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
      const std::string& name = j < static_cast<Eigen::Index>(colNames.size()) ? colNames[j] : "z" + std::to_string(j + 1);
      const double mu = z.col(j).mean();
      const double sd = n > 1 ? std::sqrt((z.col(j).array() - mu).square().sum() / static_cast<double>(n - 1)) : 0.0;
      if (!(sd > 0.0)) {
        warn("clinical column '" + name + "' is constant and was dropped");
        continue;
      }
      Eigen::VectorXd col = (z.col(j).array() - mu) / sd;
      // Correlation with the span of the retained columns: 1 - |resid|^2/|col|^2 = R^2.
      if (kept.cols() > 0) {
        Eigen::VectorXd resid = col - kept * kept.colPivHouseholderQr().solve(col);
        const double r2 = 1.0 - resid.squaredNorm() / col.squaredNorm();
        if (std::sqrt(std::max(r2, 0.0)) > 1.0 - kCollinearity) {
          warn("clinical column '" + name + "' is collinear with earlier columns and was dropped");
          continue;
        }
      }
      kept.conservativeResize(n, kept.cols() + 1);
      kept.col(kept.cols() - 1) = col;
      t.names.push_back(name);
      t.source.push_back(j);
      means.push_back(mu);
      scales.push_back(sd);
    }
    t.mean = Eigen::Map<Eigen::VectorXd>(means.data(), static_cast<Eigen::Index>(means.size()));
    t.scale = Eigen::Map<Eigen::VectorXd>(scales.data(), static_cast<Eigen::Index>(scales.size()));
    return t;
  }

  Eigen::Index columns() const { return static_cast<Eigen::Index>(names.size()); }

  /// Applies to a matrix with the same column layout fit() saw.
  Eigen::MatrixXd apply(const Eigen::Ref<const Eigen::MatrixXd>& z) const {
    Eigen::MatrixXd out(z.rows(), columns());
    for (Eigen::Index j = 0; j < columns(); ++j) {
      if (source[j] >= z.cols()) throw SchemaError("clinical matrix lacks column '" + names[j] + "'");
      out.col(j) = (z.col(source[j]).array() - mean[j]) / scale[j];
    }
    return out;
  }

  /// Applies to a matrix whose columns are located by name.
  Eigen::MatrixXd apply_by_name(const Eigen::Ref<const Eigen::MatrixXd>& z, const std::vector<std::string>& colNames) const {
    std::unordered_map<std::string, Eigen::Index> index;
    for (std::size_t i = 0; i < colNames.size(); ++i) index.emplace(colNames[i], static_cast<Eigen::Index>(i));
    Eigen::MatrixXd out(z.rows(), columns());
    for (Eigen::Index j = 0; j < columns(); ++j) {
      auto it = index.find(names[j]);
      if (it == index.end() || it->second >= z.cols())
        throw SchemaError("clinical data lacks column '" + names[j] + "'");
      out.col(j) = (z.col(it->second).array() - mean[j]) / scale[j];
    }
    return out;
  }
};

}  // namespace pkb
