#include <openssl/evp.h>

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pkb/pkb.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kInternal = 1, kUsage = 2, kData = 3, kNumeric = 4 };

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw pkb::DataError("cannot read '" + path.string() + "' for hashing");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("SHA-256 initialisation failed");
  }
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  char b[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(b, sizeof b, "%02x", md[i]);
    hex += b;
  }
  return hex;
}

// Written last into every output directory.
struct RunManifest {
  std::string command;
  json config = json::object();
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, fs::path>> inputs;
  std::vector<fs::path> outputs;

  void input(const std::string& role, const std::optional<std::string>& path) {
    if (path && !path->empty()) inputs.emplace_back(role, *path);
  }

  void write(const fs::path& dir) const {
    json j;
    j["software"] = "pkb";
    j["version"] = pkb::kVersion;
    j["command"] = command;
    j["seed"] = seed;
    j["config"] = config;
    j["inputs"] = json::array();
    for (const auto& [role, p] : inputs)
      j["inputs"].push_back({{"role", role}, {"path", fs::absolute(p).string()}, {"sha256", sha256_file(p)}});
    j["outputs"] = json::array();
    for (const auto& p : outputs)
      j["outputs"].push_back({{"path", p.filename().string()}, {"sha256", sha256_file(p)}});
    std::ofstream out(dir / "manifest.json");
    if (!out) throw pkb::DataError("cannot write manifest in '" + dir.string() + "'");
    out << j.dump(2) << '\n';
  }
};

fs::path prepare_dir(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p)) throw pkb::UsageError("cannot create output directory '" + dir + "'");
  return p;
}

struct DataFlags {
  std::string expression, outcome, pathways, out, geneWeights;
  std::optional<std::string> clinical;
  std::string outcomeType;
  bool regression = false, classification = false, survival = false;
  std::string penalty = "l2";
  std::string kernel = "rbf";
  double penaltyMultiplier = 1.0;
  double learningRate = 0.05;
  int maxIter = 1500;
  int patience = 50;
  std::uint64_t seed = 0;

  void add(CLI::App* app, bool model) {
    app->add_option("--expression", expression, "expression CSV (sample x gene)")->required()->check(CLI::ExistingFile);
    app->add_option("--clinical", clinical, "clinical CSV")->check(CLI::ExistingFile);
    app->add_option("--outcome", outcome, "outcome CSV")->required()->check(CLI::ExistingFile);
    app->add_option("--pathways", pathways, "pathway GMT file")->required()->check(CLI::ExistingFile);
    app->add_option("--outcome-type", outcomeType, "regression|classification|survival")
        ->check(CLI::IsMember({"regression", "classification", "survival"}));
    app->add_flag("--regression", regression, "shorthand for --outcome-type regression");
    app->add_flag("--classification", classification, "shorthand for --outcome-type classification");
    app->add_flag("--survival", survival, "shorthand for --outcome-type survival");
    app->add_option("--penalty", penalty, "l1|l2")->check(CLI::IsMember({"l1", "l2"}))->capture_default_str();
    app->add_option("--max-iter", maxIter, "maximum boosting iterations")->capture_default_str();
    app->add_option("--cv-patience", patience, "iterations without CV improvement before stopping")
        ->capture_default_str();
    app->add_option("--seed", seed, "fold-assignment seed")->capture_default_str();
    app->add_option("--gene-weights", geneWeights, "CSV gene,weight for weighted kernels")->check(CLI::ExistingFile);
    app->add_option("--out", out, "output directory")->required();
    if (model) {
      app->add_option("--kernel", kernel, "rbf|polyD")->capture_default_str();
      app->add_option("--penalty-multiplier", penaltyMultiplier, "multiplier on the automatic penalty")
          ->capture_default_str();
      app->add_option("--learning-rate", learningRate, "shrinkage")->capture_default_str();
    }
  }

  std::optional<pkb::OutcomeType> resolved_type() const {
    std::vector<pkb::OutcomeType> picked;
    if (!outcomeType.empty()) picked.push_back(pkb::parse_outcome_type(outcomeType));
    if (regression) picked.push_back(pkb::OutcomeType::Regression);
    if (classification) picked.push_back(pkb::OutcomeType::Classification);
    if (survival) picked.push_back(pkb::OutcomeType::Survival);
    for (auto t : picked)
      if (t != picked.front()) throw pkb::UsageError("conflicting outcome-type flags");
    if (picked.empty()) return std::nullopt;
    return picked.front();
  }

  pkb::BoostConfig config() const {
    pkb::BoostConfig c;
    c.learningRate = learningRate;
    c.penalty = pkb::parse_penalty(penalty);
    c.penaltyMultiplier = penaltyMultiplier;
    c.kernel = pkb::KernelSpec::parse(kernel);
    if (!geneWeights.empty()) c.kernel.geneWeights = pkb::io::read_gene_weights(geneWeights);
    c.maxIterations = maxIter;
    c.cvPatience = patience;
    c.seed = seed;
    c.validate();
    return c;
  }

  pkb::io::Ingested load() const {
    const auto type = resolved_type();
    auto in = pkb::io::ingest_files(expression, clinical ? std::optional<fs::path>(*clinical) : std::nullopt, outcome,
                                    pathways, type);
    std::cerr << "ingested: " << in.report.summary() << '\n';
    if (in.pathways.empty()) throw pkb::DataError("no pathways left after matching genes to the expression data");
    return in;
  }

  void record_inputs(RunManifest& m) const {
    m.input("expression", expression);
    m.input("clinical", clinical);
    m.input("outcome", outcome);
    m.input("pathways", pathways);
    m.input("gene-weights", geneWeights);
  }
};

void write_trace(const fs::path& path, const pkb::FittedModel& model) {
  std::ofstream out(path);
  if (!out) throw pkb::DataError("cannot write '" + path.string() + "'");
  out.precision(17);
  out << "iteration,pathway,step,train_loss,cv_loss\n";
  for (const auto& r : model.trace) {
    out << r.iteration << ',' << (r.pathway < 0 ? std::string() : model.pathways[static_cast<std::size_t>(r.pathway)].name)
        << ',' << r.step << ',' << r.trainLoss << ',';
    if (!std::isnan(r.cvLoss)) out << r.cvLoss;
    out << '\n';
  }
}

void write_model_outputs(const fs::path& dir, const pkb::FittedModel& model, RunManifest& manifest) {
  pkb::io::save_model(dir / "model.json", model);
  pkb::io::write_pathway_weights(dir / "pathway_weights.csv", model);
  write_trace(dir / "trace.csv", model);
  manifest.outputs.insert(manifest.outputs.end(),
                          {dir / "model.json", dir / "pathway_weights.csv", dir / "trace.csv"});
}

int run_train(const DataFlags& f) {
  const pkb::BoostConfig config = f.config();
  const auto in = f.load();
  const fs::path dir = prepare_dir(f.out);
  const pkb::FittedModel model = pkb::fit(in.data, in.pathways, config);
  RunManifest manifest{"train", pkb::io::config_to_json(config), config.seed, {}, {}};
  manifest.config["outcomeType"] = pkb::to_string(model.outcomeType);
  f.record_inputs(manifest);
  write_model_outputs(dir, model, manifest);
  manifest.write(dir);
  std::cout << "iterations: " << model.iterations << "\nlambda: " << model.lambda
            << "\ntraining loss: " << model.trace.back().trainLoss << '\n';
  return kOk;
}

struct TuneFlags {
  std::vector<std::string> kernels{"rbf", "poly3"};
  std::vector<double> learningRates{0.01, 0.05};
  std::vector<double> multipliers{0.04, 0.2, 1.0};
};

int run_tune(const DataFlags& f, const TuneFlags& t) {
  const pkb::BoostConfig base = f.config();
  pkb::TuneGrid grid;
  grid.kernels.clear();
  for (const auto& k : t.kernels) grid.kernels.push_back(pkb::KernelSpec::parse(k));
  grid.learningRates = t.learningRates;
  grid.penaltyMultipliers = t.multipliers;
  const auto in = f.load();
  const fs::path dir = prepare_dir(f.out);
  const pkb::TuneResult result = pkb::tune(in.data, in.pathways, base, grid);

  {
    std::ofstream out(dir / "tune.csv");
    if (!out) throw pkb::DataError("cannot write tune.csv");
    out.precision(17);
    out << "kernel,learning_rate,penalty_multiplier,iterations,cv_loss,best\n";
    for (std::size_t i = 0; i < result.cells.size(); ++i) {
      const auto& c = result.cells[i];
      out << c.config.kernel.name() << ',' << c.config.learningRate << ',' << c.config.penaltyMultiplier << ','
          << c.iterations << ',' << c.cvLoss << ',' << (i == result.best ? 1 : 0) << '\n';
    }
  }
  const auto& best = result.cells[result.best];
  json bestJson = pkb::io::config_to_json(best.config);
  bestJson["iterations"] = best.iterations;
  bestJson["cvLoss"] = best.cvLoss;
  {
    std::ofstream out(dir / "best.json");
    if (!out) throw pkb::DataError("cannot write best.json");
    out << bestJson.dump(2) << '\n';
  }
  RunManifest manifest{"tune", pkb::io::config_to_json(base), base.seed, {}, {dir / "tune.csv", dir / "best.json"}};
  manifest.config["grid"] = {{"kernels", t.kernels}, {"learningRates", t.learningRates}, {"penaltyMultipliers", t.multipliers}};
  f.record_inputs(manifest);
  write_model_outputs(dir, result.model, manifest);
  manifest.write(dir);
  std::cout << "best: kernel " << best.config.kernel.name() << ", learning rate " << best.config.learningRate
            << ", penalty multiplier " << best.config.penaltyMultiplier << ", iterations " << best.iterations
            << ", CV loss " << best.cvLoss << '\n';
  return kOk;
}

struct PredictFlags {
  std::string model, expression, out;
  std::optional<std::string> clinical;
};

int run_predict(const PredictFlags& f) {
  const fs::path modelPath = fs::is_directory(f.model) ? fs::path(f.model) / "model.json" : fs::path(f.model);
  if (!fs::exists(modelPath)) throw pkb::UsageError("model file '" + modelPath.string() + "' not found");
  const pkb::FittedModel model = pkb::io::load_model(modelPath);
  const auto expr = pkb::io::read_expression(f.expression);

  Eigen::MatrixXd clinical(expr.values.rows(), 0);
  std::vector<std::string> clinicalNames;
  if (model.clinical.columns() > 0) {
    if (!f.clinical) throw pkb::UsageError("the model uses clinical features; pass --clinical");
    const auto c = pkb::io::read_clinical(*f.clinical);
    std::unordered_map<std::string, Eigen::Index> row;
    for (std::size_t i = 0; i < c.sampleIds.size(); ++i) row.emplace(c.sampleIds[i], static_cast<Eigen::Index>(i));
    clinical.resize(expr.values.rows(), c.values.cols());
    for (std::size_t i = 0; i < expr.sampleIds.size(); ++i) {
      auto it = row.find(expr.sampleIds[i]);
      if (it == row.end()) throw pkb::DataError("sample '" + expr.sampleIds[i] + "' has no clinical row");
      clinical.row(static_cast<Eigen::Index>(i)) = c.values.row(it->second);
    }
    clinicalNames = c.names;
  }
  const Eigen::VectorXd scores = pkb::predict(model, expr.values, expr.genes, clinical, clinicalNames);

  const fs::path dir = prepare_dir(f.out);
  pkb::io::write_predictions(dir / "predictions.csv", expr.sampleIds, scores, model.outcomeType);
  RunManifest manifest{"predict", pkb::io::config_to_json(model.config), model.config.seed, {}, {dir / "predictions.csv"}};
  manifest.input("model", modelPath.string());
  manifest.input("expression", f.expression);
  manifest.input("clinical", f.clinical);
  manifest.write(dir);
  std::cout << "predicted " << scores.size() << " samples\n";
  return kOk;
}

struct SimulateFlags {
  int model = 1;
  int pathways = 20;
  std::string outcomeType = "regression";
  int n = 300;
  std::uint64_t seed = 0;
  std::string out;
};

int run_simulate(const SimulateFlags& f) {
  pkb::sim::SimDesign d;
  d.model = static_cast<pkb::sim::Model>(f.model);
  d.pathwayCount = f.pathways;
  d.sampleSize = f.n;
  d.outcomeType = pkb::parse_outcome_type(f.outcomeType);
  d.seed = f.seed;
  const auto s = pkb::sim::simulate(d);
  const fs::path dir = prepare_dir(f.out);
  const auto& data = s.data;
  pkb::io::write_matrix_csv(dir / "expression.csv", data.sampleIds, data.genes, data.expression);
  pkb::io::write_matrix_csv(dir / "clinical.csv", data.sampleIds, data.clinicalNames, data.clinical);
  pkb::io::write_outcome(dir / "outcome.csv", data.sampleIds, data.outcome);
  pkb::io::write_gmt(dir / "pathways.gmt", s.pathways);
  pkb::io::write_matrix_csv(dir / "truth.csv", data.sampleIds, {"true_score"}, s.trueScore);

  json truth;
  truth["model"] = f.model;
  truth["pathways"] = f.pathways;
  truth["outcomeType"] = f.outcomeType;
  truth["n"] = f.n;
  truth["seed"] = f.seed;
  truth["informativePathways"] = json::array();
  for (int m : s.informative) truth["informativePathways"].push_back(pkb::sim::pathway_name(m));
  if (d.outcomeType == pkb::OutcomeType::Survival) {
    truth["weibullScale"] = s.kappa;
    truth["weibullShape"] = d.weibullShape;
    truth["censorFraction"] = d.censorFraction;
  }
  {
    std::ofstream out(dir / "truth.json");
    if (!out) throw pkb::DataError("cannot write truth.json");
    out << truth.dump(2) << '\n';
  }
  RunManifest manifest{"simulate", truth, f.seed, {}, {}};
  for (const char* name : {"expression.csv", "clinical.csv", "outcome.csv", "pathways.gmt", "truth.csv", "truth.json"})
    manifest.outputs.push_back(dir / name);
  manifest.write(dir);
  std::cout << "simulated " << f.n << " samples, " << d.genes() << " genes into " << dir.string() << '\n';
  return kOk;
}

struct EvalFlags {
  std::string predictions, outcome, outcomeType;
  std::optional<std::string> out;
};

int run_eval(const EvalFlags& f) {
  const auto table = pkb::io::read_csv(f.predictions);
  if (table.header.size() < 2) throw pkb::DataError("prediction file needs a sample column and a score column");
  std::size_t col = 1;
  for (std::size_t j = 1; j < table.header.size(); ++j)
    if (table.header[j] == "score") col = j;
  std::unordered_map<std::string, double> score;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    auto v = pkb::io::detail::try_number(table.rows[i][col]);
    if (!v) throw pkb::ParseError(table.path + ": non-numeric score '" + table.rows[i][col] + "'", table.lines[i]);
    score[table.rows[i][0]] = *v;
  }
  std::optional<pkb::OutcomeType> type;
  if (!f.outcomeType.empty()) type = pkb::parse_outcome_type(f.outcomeType);
  const auto outcome = pkb::io::read_outcome(f.outcome, type);

  std::vector<Eigen::Index> keep;
  std::vector<double> s;
  for (std::size_t i = 0; i < outcome.sampleIds.size(); ++i) {
    auto it = score.find(outcome.sampleIds[i]);
    if (it == score.end()) continue;
    keep.push_back(static_cast<Eigen::Index>(i));
    s.push_back(it->second);
  }
  if (keep.empty()) throw pkb::DataError("no sample ids shared by the prediction and outcome files");
  if (keep.size() < outcome.sampleIds.size())
    pkb::warn(std::to_string(outcome.sampleIds.size() - keep.size()) + " outcome samples have no prediction");
  const Eigen::Map<const Eigen::VectorXd> f1(s.data(), static_cast<Eigen::Index>(s.size()));
  const pkb::Outcome o = pkb::subset(outcome.outcome, keep);

  json result;
  result["samples"] = keep.size();
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, pkb::RegressionOutcome>) {
          result["mse"] = pkb::mse(v.y, f1);
          std::cout << "mse: " << pkb::io::detail::format_double(result["mse"].get<double>()) << '\n';
        } else if constexpr (std::is_same_v<T, pkb::ClassificationOutcome>) {
          Eigen::VectorXd p = f1.unaryExpr([](double x) { return pkb::score_to_prediction(pkb::OutcomeType::Classification, x); });
          result["error"] = pkb::classification_error(v.label, p);
          result["logLoss"] = pkb::log_loss(v.label, p);
          std::cout << "error: " << result["error"].get<double>() << "\nlog_loss: " << result["logLoss"].get<double>()
                    << '\n';
        } else {
          const auto c = pkb::c_index(v.time, v.event, f1);
          result["cIndex"] = c.cIndex;
          result["permissiblePairs"] = c.permissiblePairs;
          std::cout << "c_index: " << c.cIndex << '\n';
        }
      },
      o);
  if (f.out) {
    const fs::path dir = prepare_dir(*f.out);
    {
      std::ofstream out(dir / "eval.json");
      if (!out) throw pkb::DataError("cannot write eval.json");
      out << result.dump(2) << '\n';
    }
    RunManifest manifest{"eval", {{"outcomeType", f.outcomeType}}, 0, {}, {dir / "eval.json"}};
    manifest.input("predictions", f.predictions);
    manifest.input("outcome", f.outcome);
    manifest.write(dir);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pathway-based kernel boosting"};
  app.set_version_flag("--version", std::string(pkb::kVersion));
  app.require_subcommand(1);

  DataFlags trainFlags;
  auto* train = app.add_subcommand("train", "fit a model with CV-chosen iteration count");
  trainFlags.add(train, true);

  DataFlags tuneFlags;
  TuneFlags grid;
  auto* tuneCmd = app.add_subcommand("tune", "cross-validate a grid of kernel, learning rate and penalty multiplier");
  tuneFlags.add(tuneCmd, false);
  tuneCmd->add_option("--kernels", grid.kernels, "kernels to try")->delimiter(',')->capture_default_str();
  tuneCmd->add_option("--learning-rates", grid.learningRates, "learning rates to try")
      ->delimiter(',')
      ->capture_default_str();
  tuneCmd->add_option("--penalty-multipliers", grid.multipliers, "penalty multipliers to try")
      ->delimiter(',')
      ->capture_default_str();

  PredictFlags predictFlags;
  auto* predictCmd = app.add_subcommand("predict", "score new samples");
  predictCmd->add_option("--model", predictFlags.model, "model.json or a train output directory")
      ->required()
      ->check(CLI::ExistingPath);
  predictCmd->add_option("--expression", predictFlags.expression)->required()->check(CLI::ExistingFile);
  predictCmd->add_option("--clinical", predictFlags.clinical)->check(CLI::ExistingFile);
  predictCmd->add_option("--out", predictFlags.out, "output directory")->required();

  SimulateFlags simFlags;
  auto* simCmd = app.add_subcommand("simulate", "generate a synthetic dataset");
  simCmd->add_option("--model", simFlags.model)->check(CLI::IsMember({1, 2, 3}))->capture_default_str();
  simCmd->add_option("--pathways", simFlags.pathways, "pathway count")->check(CLI::Range(1, 100000))->capture_default_str();
  simCmd->add_option("--outcome-type", simFlags.outcomeType)
      ->check(CLI::IsMember({"regression", "survival"}))
      ->capture_default_str();
  simCmd->add_option("--n", simFlags.n, "sample count")->check(CLI::Range(2, 10000000))->capture_default_str();
  simCmd->add_option("--seed", simFlags.seed)->capture_default_str();
  simCmd->add_option("--out", simFlags.out, "output directory")->required();

  EvalFlags evalFlags;
  auto* evalCmd = app.add_subcommand("eval", "score a prediction file against an outcome file");
  evalCmd->add_option("--predictions", evalFlags.predictions)->required()->check(CLI::ExistingFile);
  evalCmd->add_option("--outcome", evalFlags.outcome)->required()->check(CLI::ExistingFile);
  evalCmd->add_option("--outcome-type", evalFlags.outcomeType)
      ->check(CLI::IsMember({"regression", "classification", "survival"}));
  evalCmd->add_option("--out", evalFlags.out, "optional output directory for eval.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*train) return run_train(trainFlags);
    if (*tuneCmd) return run_tune(tuneFlags, grid);
    if (*predictCmd) return run_predict(predictFlags);
    if (*simCmd) return run_simulate(simFlags);
    if (*evalCmd) return run_eval(evalFlags);
  } catch (const pkb::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    switch (e.kind()) {
      case pkb::ErrorKind::Usage: return kUsage;
      case pkb::ErrorKind::Data: return kData;
      case pkb::ErrorKind::Numeric: return kNumeric;
    }
    return kInternal;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternal;
  }
  return kUsage;
}
