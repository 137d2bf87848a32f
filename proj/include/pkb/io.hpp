#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "pkb/boost.hpp"
#include "pkb/dataset.hpp"
#include "pkb/errors.hpp"
#include "pkb/log.hpp"
#include "pkb/loss.hpp"

namespace pkb::io {

// ---------------------------------------------------------------- CSV

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<long> lines;  // source line of each row
  std::string path;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line, const std::string& path, long lineNo) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cell += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cell));
      cell.clear();
    } else {
      cell += c;
    }
  }
  if (quoted) throw ParseError(path + ": unterminated quoted field", lineNo);
  out.push_back(std::move(cell));
  return out;
}

inline std::string trim(std::string s) {
  auto notSpace = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), notSpace));
  s.erase(std::find_if(s.rbegin(), s.rend(), notSpace).base(), s.end());
  return s;
}

inline bool is_missing(const std::string& cell) {
  return cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan" || cell == "null";
}

inline std::optional<double> try_number(const std::string& cell) {
  if (cell.empty()) return std::nullopt;
  const char* first = cell.data();
  const char* last = first + cell.size();
  if (*first == '+') ++first;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out.precision(17);
  return out;
}

}  // namespace detail

/// Comma-separated, header row mandatory, double-quote quoting, blank lines skipped.
inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read '" + path.string() + "'");
  CsvTable t;
  t.path = path.string();
  std::string line;
  long lineNo = 0;
  bool haveHeader = false;
  while (std::getline(in, line)) {
    ++lineNo;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineNo == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_csv_line(line, t.path, lineNo);
    for (auto& c : cells) c = detail::trim(c);
    if (!haveHeader) {
      t.header = std::move(cells);
      haveHeader = true;
      continue;
    }
    if (cells.size() != t.header.size())
      throw ParseError(t.path + ": expected " + std::to_string(t.header.size()) + " fields, found " +
                           std::to_string(cells.size()),
                       lineNo);
    t.rows.push_back(std::move(cells));
    t.lines.push_back(lineNo);
  }
  if (!haveHeader) throw ParseError(t.path + ": missing header row", 0);
  return t;
}

// ---------------------------------------------------------------- tables

struct ExpressionTable {
  std::vector<std::string> sampleIds;
  std::vector<std::string> genes;
  Eigen::MatrixXd values;
};

inline ExpressionTable read_expression(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  if (t.header.size() < 2) throw ParseError(t.path + ": expression file needs a sample column and genes", 1);
  ExpressionTable e;
  e.genes.assign(t.header.begin() + 1, t.header.end());
  std::unordered_set<std::string> seen;
  for (const auto& g : e.genes)
    if (!seen.insert(g).second) throw DataError(t.path + ": duplicate gene column '" + g + "'");
  e.values.resize(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(e.genes.size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    e.sampleIds.push_back(t.rows[i][0]);
    for (std::size_t j = 1; j < t.header.size(); ++j) {
      auto v = detail::try_number(t.rows[i][j]);
      if (!v)
        throw ParseError(t.path + ": non-numeric expression value '" + t.rows[i][j] + "' for gene '" +
                             t.header[j] + "'",
                         t.lines[i]);
      e.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j - 1)) = *v;
    }
  }
  return e;
}

/// Clinical covariates after encoding: numeric columns pass through,
/// categorical columns become indicators for every level but the first (in
/// sorted order). Missing cells are NaN.
struct ClinicalTable {
  std::vector<std::string> sampleIds;
  std::vector<std::string> names;
  Eigen::MatrixXd values;
};

inline ClinicalTable read_clinical(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  if (t.header.empty()) throw ParseError(t.path + ": empty header", 1);
  ClinicalTable c;
  const std::size_t n = t.rows.size();
  for (const auto& r : t.rows) c.sampleIds.push_back(r[0]);
  std::vector<Eigen::VectorXd> cols;
  for (std::size_t j = 1; j < t.header.size(); ++j) {
    bool numeric = true;
    for (const auto& r : t.rows)
      if (!detail::is_missing(r[j]) && !detail::try_number(r[j])) numeric = false;
    if (numeric) {
      Eigen::VectorXd v(static_cast<Eigen::Index>(n));
      for (std::size_t i = 0; i < n; ++i)
        v[static_cast<Eigen::Index>(i)] = detail::is_missing(t.rows[i][j]) ? NAN : *detail::try_number(t.rows[i][j]);
      c.names.push_back(t.header[j]);
      cols.push_back(std::move(v));
      continue;
    }
    std::set<std::string> levels;
    for (const auto& r : t.rows)
      if (!detail::is_missing(r[j])) levels.insert(r[j]);
    auto it = levels.begin();
    for (++it; it != levels.end(); ++it) {
      Eigen::VectorXd v(static_cast<Eigen::Index>(n));
      for (std::size_t i = 0; i < n; ++i)
        v[static_cast<Eigen::Index>(i)] = detail::is_missing(t.rows[i][j]) ? NAN : (t.rows[i][j] == *it ? 1.0 : 0.0);
      c.names.push_back(t.header[j] + "=" + *it);
      cols.push_back(std::move(v));
    }
  }
  c.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) c.values.col(static_cast<Eigen::Index>(j)) = cols[j];
  return c;
}

struct OutcomeTable {
  std::vector<std::string> sampleIds;
  Outcome outcome;
};

/// Infers the outcome type from the header: (sample, time, status) is
/// survival, a column named "label" is classification, anything else with two
/// columns is regression.
inline OutcomeType infer_outcome_type(const std::vector<std::string>& header) {
  auto has = [&](const char* name) { return std::find(header.begin(), header.end(), name) != header.end(); };
  if (has("time") && has("status")) return OutcomeType::Survival;
  if (has("label")) return OutcomeType::Classification;
  if (header.size() == 3) return OutcomeType::Survival;
  return OutcomeType::Regression;
}

/// Rows with a missing outcome are dropped with a warning.
inline OutcomeTable read_outcome(const std::filesystem::path& path, std::optional<OutcomeType> type = std::nullopt) {
  const CsvTable t = read_csv(path);
  const OutcomeType inferred = infer_outcome_type(t.header);
  if (type && *type != inferred) {
    const bool headerIsExplicit =
        std::find(t.header.begin(), t.header.end(), "time") != t.header.end() ||
        std::find(t.header.begin(), t.header.end(), "label") != t.header.end() ||
        std::find(t.header.begin(), t.header.end(), "y") != t.header.end();
    if (headerIsExplicit)
      throw UsageError("outcome type '" + to_string(*type) + "' conflicts with the columns of '" + t.path +
                       "' (looks like " + to_string(inferred) + ")");
  }
  const OutcomeType kind = type.value_or(inferred);
  auto column = [&](const char* name, std::size_t fallback) -> std::size_t {
    auto it = std::find(t.header.begin(), t.header.end(), name);
    if (it != t.header.end()) return static_cast<std::size_t>(it - t.header.begin());
    if (fallback < t.header.size()) return fallback;
    throw SchemaError(t.path + ": missing outcome column '" + std::string(name) + "'");
  };

  OutcomeTable o;
  std::size_t dropped = 0;
  auto value = [&](std::size_t i, std::size_t j) { return detail::try_number(t.rows[i][j]); };
  auto check_present = [&](std::size_t i, std::size_t j) {
    const std::string& cell = t.rows[i][j];
    if (detail::is_missing(cell)) return false;
    if (!detail::try_number(cell))
      throw ParseError(t.path + ": non-numeric outcome value '" + cell + "'", t.lines[i]);
    return true;
  };

  std::vector<double> a, b;
  if (kind == OutcomeType::Survival) {
    const std::size_t ct = column("time", 1), cs = column("status", 2);
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      if (!check_present(i, ct) || !check_present(i, cs)) {
        ++dropped;
        continue;
      }
      const double status = *value(i, cs);
      if (status != 0.0 && status != 1.0) throw ParseError(t.path + ": status must be 0 or 1", t.lines[i]);
      o.sampleIds.push_back(t.rows[i][0]);
      a.push_back(*value(i, ct));
      b.push_back(status);
    }
    SurvivalOutcome s;
    s.time = Eigen::Map<Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(a.size()));
    s.event = Eigen::Map<Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size())).cast<int>();
    o.outcome = std::move(s);
  } else {
    const std::size_t cy = column(kind == OutcomeType::Classification ? "label" : "y", 1);
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      if (!check_present(i, cy)) {
        ++dropped;
        continue;
      }
      o.sampleIds.push_back(t.rows[i][0]);
      a.push_back(*value(i, cy));
    }
    Eigen::VectorXd v = Eigen::Map<Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(a.size()));
    if (kind == OutcomeType::Classification) {
      const bool zeroOne = (v.array() == 0.0 || v.array() == 1.0).all();
      const bool signs = (v.array() == -1.0 || v.array() == 1.0).all();
      if (!zeroOne && !signs) throw DataError(t.path + ": class labels must be coded 0/1 or -1/+1");
      if (zeroOne) v = 2.0 * v.array() - 1.0;
      o.outcome = ClassificationOutcome{std::move(v)};
    } else {
      o.outcome = RegressionOutcome{std::move(v)};
    }
  }
  if (dropped > 0) warn(t.path + ": " + std::to_string(dropped) + " samples with missing outcome dropped");
  return o;
}

/// NAME<TAB>DESCRIPTION<TAB>gene... per line; duplicate genes within a line
/// are removed, keeping the first occurrence.
inline PathwayCollection parse_gmt(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read '" + path.string() + "'");
  PathwayCollection out;
  std::string line;
  long lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, '\t')) fields.push_back(f);
    if (!line.empty() && line.back() == '\t') fields.emplace_back();
    if (fields.size() < 3) throw ParseError(path.string() + ": GMT line needs name, description and genes", lineNo);
    Pathway p;
    p.name = fields[0];
    p.description = fields[1];
    std::unordered_set<std::string> seen;
    for (std::size_t k = 2; k < fields.size(); ++k) {
      std::string g = detail::trim(fields[k]);
      if (!g.empty() && seen.insert(g).second) p.genes.push_back(std::move(g));
    }
    out.push_back(std::move(p));
  }
  return out;
}

/// gene,weight CSV.
inline std::map<std::string, double> read_gene_weights(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  if (t.header.size() < 2) throw ParseError(t.path + ": gene-weight file needs columns gene,weight", 1);
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    auto v = detail::try_number(t.rows[i][1]);
    if (!v || *v < 0.0) throw ParseError(t.path + ": gene weight must be a nonnegative number", t.lines[i]);
    out[t.rows[i][0]] = *v;
  }
  return out;
}

// ---------------------------------------------------------------- ingest

struct IngestReport {
  std::size_t samples = 0;
  std::size_t samplesDropped = 0;
  std::size_t genes = 0;
  std::size_t pathwaysRetained = 0;
  std::size_t pathwaysDropped = 0;

  std::string summary() const {
    return std::to_string(samples) + " samples (" + std::to_string(samplesDropped) + " dropped), " +
           std::to_string(genes) + " genes, " + std::to_string(pathwaysRetained) + " pathways retained, " +
           std::to_string(pathwaysDropped) + " dropped";
  }
};

struct IngestOptions {
  std::size_t minSamples = 10;
  std::size_t minPathwayGenes = 2;
};

struct Ingested {
  ExpressionDataset data;
  PathwayCollection pathways;
  IngestReport report;
};

/// Inner join on sample id in expression-file order. Clinical may be absent
/// (no clinical features). Pathways are restricted to genes present in the
/// expression data; those left with fewer than `minPathwayGenes` genes are
/// dropped with a warning.
inline Ingested ingest(const ExpressionTable& expr, const std::optional<ClinicalTable>& clinical,
                       const OutcomeTable& outcome, const PathwayCollection& pathways, const IngestOptions& opt = {}) {
  std::unordered_map<std::string, std::size_t> clinRow, outRow;
  if (clinical)
    for (std::size_t i = 0; i < clinical->sampleIds.size(); ++i)
      if (!clinRow.emplace(clinical->sampleIds[i], i).second)
        throw DataError("duplicate sample id '" + clinical->sampleIds[i] + "' in clinical data");
  for (std::size_t i = 0; i < outcome.sampleIds.size(); ++i)
    if (!outRow.emplace(outcome.sampleIds[i], i).second)
      throw DataError("duplicate sample id '" + outcome.sampleIds[i] + "' in outcome data");

  std::vector<Eigen::Index> er;
  std::vector<Eigen::Index> cr, orow;
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < expr.sampleIds.size(); ++i) {
    const auto& id = expr.sampleIds[i];
    if (!seen.insert(id).second) throw DataError("duplicate sample id '" + id + "' in expression data");
    auto o = outRow.find(id);
    if (o == outRow.end()) continue;
    std::size_t c = 0;
    if (clinical) {
      auto it = clinRow.find(id);
      if (it == clinRow.end()) continue;
      c = it->second;
    }
    er.push_back(static_cast<Eigen::Index>(i));
    cr.push_back(static_cast<Eigen::Index>(c));
    orow.push_back(static_cast<Eigen::Index>(o->second));
  }

  Ingested r;
  r.report.samples = er.size();
  r.report.samplesDropped = expr.sampleIds.size() - er.size();
  if (r.report.samplesDropped > 0)
    warn(std::to_string(r.report.samplesDropped) + " expression samples have no matching outcome/clinical row");
  if (er.size() < opt.minSamples)
    throw DataError("only " + std::to_string(er.size()) + " samples remain after joining the input files (need " +
                    std::to_string(opt.minSamples) + ")");

  ExpressionDataset& d = r.data;
  d.genes = expr.genes;
  d.expression.resize(static_cast<Eigen::Index>(er.size()), expr.values.cols());
  for (std::size_t i = 0; i < er.size(); ++i) {
    d.sampleIds.push_back(expr.sampleIds[static_cast<std::size_t>(er[i])]);
    d.expression.row(static_cast<Eigen::Index>(i)) = expr.values.row(er[i]);
  }
  if (clinical) {
    d.clinicalNames = clinical->names;
    d.clinical.resize(static_cast<Eigen::Index>(er.size()), clinical->values.cols());
    for (std::size_t i = 0; i < cr.size(); ++i) d.clinical.row(static_cast<Eigen::Index>(i)) = clinical->values.row(cr[i]);
    for (Eigen::Index i = 0; i < d.clinical.rows(); ++i)
      for (Eigen::Index j = 0; j < d.clinical.cols(); ++j)
        if (std::isnan(d.clinical(i, j)))
          throw DataError("missing clinical value for sample '" + d.sampleIds[static_cast<std::size_t>(i)] +
                          "', column '" + d.clinicalNames[static_cast<std::size_t>(j)] + "'");
  } else {
    d.clinical.resize(static_cast<Eigen::Index>(er.size()), 0);
  }
  d.outcome = subset(outcome.outcome, orow);
  r.report.genes = d.genes.size();

  std::unordered_set<std::string> available(d.genes.begin(), d.genes.end());
  for (const auto& p : pathways) {
    Pathway kept{p.name, p.description, {}};
    for (const auto& g : p.genes)
      if (available.count(g)) kept.genes.push_back(g);
    if (kept.genes.size() < opt.minPathwayGenes) {
      warn("pathway '" + p.name + "' has " + std::to_string(kept.genes.size()) +
           " genes in the expression data and was dropped");
      ++r.report.pathwaysDropped;
      continue;
    }
    r.pathways.push_back(std::move(kept));
  }
  r.report.pathwaysRetained = r.pathways.size();
  return r;
}

inline Ingested ingest_files(const std::filesystem::path& expression, const std::optional<std::filesystem::path>& clinical,
                             const std::filesystem::path& outcome, const std::filesystem::path& pathways,
                             std::optional<OutcomeType> type = std::nullopt, const IngestOptions& opt = {}) {
  const ExpressionTable e = read_expression(expression);
  std::optional<ClinicalTable> c;
  if (clinical) c = read_clinical(*clinical);
  const OutcomeTable o = read_outcome(outcome, type);
  return ingest(e, c, o, parse_gmt(pathways), opt);
}

// ---------------------------------------------------------------- writers

inline void write_matrix_csv(const std::filesystem::path& path, const std::vector<std::string>& ids,
                             const std::vector<std::string>& genes, const Eigen::MatrixXd& x) {
  auto out = detail::open_out(path);
  out << "sample";
  for (const auto& g : genes) out << ',' << detail::csv_escape(g);
  out << '\n';
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    out << detail::csv_escape(ids[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < x.cols(); ++j) out << ',' << detail::format_double(x(i, j));
    out << '\n';
  }
}

inline void write_outcome(const std::filesystem::path& path, const std::vector<std::string>& ids, const Outcome& o) {
  auto out = detail::open_out(path);
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, RegressionOutcome>) {
          out << "sample,y\n";
          for (Eigen::Index i = 0; i < v.y.size(); ++i)
            out << detail::csv_escape(ids[static_cast<std::size_t>(i)]) << ',' << detail::format_double(v.y[i]) << '\n';
        } else if constexpr (std::is_same_v<T, ClassificationOutcome>) {
          out << "sample,label\n";
          for (Eigen::Index i = 0; i < v.label.size(); ++i)
            out << detail::csv_escape(ids[static_cast<std::size_t>(i)]) << ',' << (v.label[i] > 0 ? 1 : 0) << '\n';
        } else {
          out << "sample,time,status\n";
          for (Eigen::Index i = 0; i < v.time.size(); ++i)
            out << detail::csv_escape(ids[static_cast<std::size_t>(i)]) << ',' << detail::format_double(v.time[i])
                << ',' << v.event[i] << '\n';
        }
      },
      o);
}

inline void write_gmt(const std::filesystem::path& path, const PathwayCollection& pathways) {
  auto out = detail::open_out(path);
  for (const auto& p : pathways) {
    out << p.name << '\t' << p.description;
    for (const auto& g : p.genes) out << '\t' << g;
    out << '\n';
  }
}

inline void write_predictions(const std::filesystem::path& path, const std::vector<std::string>& ids,
                              const Eigen::VectorXd& scores, OutcomeType type) {
  auto out = detail::open_out(path);
  const char* label = type == OutcomeType::Regression       ? "prediction"
                      : type == OutcomeType::Classification ? "probability"
                                                            : "relative_risk";
  out << "sample,score," << label << '\n';
  for (Eigen::Index i = 0; i < scores.size(); ++i)
    out << detail::csv_escape(ids[static_cast<std::size_t>(i)]) << ',' << detail::format_double(scores[i]) << ','
        << detail::format_double(score_to_prediction(type, scores[i])) << '\n';
}

inline void write_pathway_weights(const std::filesystem::path& path, const FittedModel& model) {
  std::vector<std::pair<std::string, double>> w;
  for (const auto& p : model.pathways) w.emplace_back(p.name, p.beta.norm());
  std::stable_sort(w.begin(), w.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  auto out = detail::open_out(path);
  out << "pathway,weight\n";
  for (const auto& [name, v] : w) out << detail::csv_escape(name) << ',' << detail::format_double(v) << '\n';
}

// ---------------------------------------------------------------- model JSON

namespace detail {

inline nlohmann::json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Eigen::VectorXd json_vec(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline nlohmann::json maybe_nan(double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); }
inline double from_maybe_nan(const nlohmann::json& j) { return j.is_null() ? NAN : j.get<double>(); }

}  // namespace detail

inline constexpr const char* kModelFormat = "pkb-model";
inline constexpr int kModelVersion = 1;

inline nlohmann::json config_to_json(const BoostConfig& c) {
  return {{"learning_rate", c.learningRate},
          {"penalty", to_string(c.penalty)},
          {"penalty_multiplier", c.penaltyMultiplier},
          {"kernel", c.kernel.name()},
          {"gene_weights", c.kernel.geneWeights},
          {"max_iterations", c.maxIterations},
          {"cv_patience", c.cvPatience},
          {"folds", c.folds},
          {"seed", c.seed},
          {"max_step", c.maxStep}};
}

inline BoostConfig config_from_json(const nlohmann::json& j) {
  BoostConfig c;
  c.learningRate = j.at("learning_rate").get<double>();
  c.penalty = parse_penalty(j.at("penalty").get<std::string>());
  c.penaltyMultiplier = j.at("penalty_multiplier").get<double>();
  c.kernel = KernelSpec::parse(j.at("kernel").get<std::string>());
  if (j.contains("gene_weights")) c.kernel.geneWeights = j.at("gene_weights").get<std::map<std::string, double>>();
  c.maxIterations = j.at("max_iterations").get<int>();
  c.cvPatience = j.at("cv_patience").get<int>();
  c.folds = j.value("folds", 3);
  c.seed = j.at("seed").get<std::uint64_t>();
  c.maxStep = j.value("max_step", 100.0);
  return c;
}

inline nlohmann::json model_to_json(const FittedModel& m) {
  nlohmann::json j;
  j["format"] = kModelFormat;
  j["version"] = kModelVersion;
  j["outcome_type"] = to_string(m.outcomeType);
  j["config"] = config_to_json(m.config);
  j["lambda_auto"] = m.lambdaAuto;
  j["lambda"] = m.lambda;
  j["f0"] = m.f0;
  j["iterations"] = m.iterations;
  j["training_samples"] = m.trainingSamples;
  j["gamma"] = detail::vec_json(m.gamma);
  j["clinical"] = {{"names", m.clinical.names},
                   {"source", m.clinical.source},
                   {"mean", detail::vec_json(m.clinical.mean)},
                   {"scale", detail::vec_json(m.clinical.scale)}};
  nlohmann::json pathways = nlohmann::json::array();
  for (const auto& p : m.pathways) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < p.trainingExpression.rows(); ++i)
      rows.push_back(detail::vec_json(p.trainingExpression.row(i).transpose()));
    pathways.push_back({{"id", p.name},
                        {"genes", p.genes},
                        {"gene_weights", detail::vec_json(p.geneWeights)},
                        {"beta", detail::vec_json(p.beta)},
                        {"weight", p.beta.norm()},
                        {"training_expression", rows}});
  }
  j["pathways"] = std::move(pathways);
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& r : m.trace)
    trace.push_back({{"iteration", r.iteration},
                     {"pathway", r.pathway},
                     {"step", r.step},
                     {"train_loss", r.trainLoss},
                     {"cv_loss", detail::maybe_nan(r.cvLoss)}});
  j["trace"] = std::move(trace);
  nlohmann::json cv = nlohmann::json::array();
  for (double v : m.cvCurve) cv.push_back(detail::maybe_nan(v));
  j["cv_curve"] = std::move(cv);
  j["training_scores"] = detail::vec_json(m.trainingScores);
  return j;
}

inline FittedModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", std::string()) != kModelFormat) throw SchemaError("not a PKB model document");
    if (j.at("version").get<int>() != kModelVersion) throw SchemaError("unsupported model version");
    FittedModel m;
    m.outcomeType = parse_outcome_type(j.at("outcome_type").get<std::string>());
    m.config = config_from_json(j.at("config"));
    m.lambdaAuto = j.at("lambda_auto").get<double>();
    m.lambda = j.at("lambda").get<double>();
    m.f0 = j.at("f0").get<double>();
    m.iterations = j.at("iterations").get<int>();
    m.trainingSamples = j.at("training_samples").get<std::vector<std::string>>();
    m.gamma = detail::json_vec(j.at("gamma"));
    const auto& c = j.at("clinical");
    m.clinical.names = c.at("names").get<std::vector<std::string>>();
    m.clinical.source = c.at("source").get<std::vector<Eigen::Index>>();
    m.clinical.mean = detail::json_vec(c.at("mean"));
    m.clinical.scale = detail::json_vec(c.at("scale"));
    for (const auto& p : j.at("pathways")) {
      PathwayModel pm;
      pm.name = p.at("id").get<std::string>();
      pm.genes = p.at("genes").get<std::vector<std::string>>();
      pm.geneWeights = detail::json_vec(p.at("gene_weights"));
      pm.beta = detail::json_vec(p.at("beta"));
      const auto& rows = p.at("training_expression");
      pm.trainingExpression.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(pm.genes.size()));
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const Eigen::VectorXd r = detail::json_vec(rows[i]);
        if (r.size() != pm.trainingExpression.cols()) throw SchemaError("training expression row has wrong length");
        pm.trainingExpression.row(static_cast<Eigen::Index>(i)) = r.transpose();
      }
      if (pm.beta.size() != pm.trainingExpression.rows()) throw SchemaError("beta length differs from training rows");
      m.pathways.push_back(std::move(pm));
    }
    for (const auto& r : j.at("trace"))
      m.trace.push_back({r.at("iteration").get<int>(), r.at("pathway").get<int>(), r.at("step").get<double>(),
                         r.at("train_loss").get<double>(), detail::from_maybe_nan(r.at("cv_loss"))});
    for (const auto& v : j.at("cv_curve")) m.cvCurve.push_back(detail::from_maybe_nan(v));
    m.trainingScores = detail::json_vec(j.at("training_scores"));
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed model document: ") + e.what());
  }
}

inline void save_model(const std::filesystem::path& path, const FittedModel& m) {
  auto out = detail::open_out(path);
  out << model_to_json(m).dump(1) << '\n';
}

inline FittedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
  return model_from_json(j);
}

}  // namespace pkb::io
