#include "spatml/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cctype>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <memory>
#include <sstream>

#include "spatml/eval.hpp"
#include "spatml/io.hpp"
#include "spatml/parallel.hpp"
#include "spatml/spatrf.hpp"
#include "spatml/synthetic.hpp"
#include "spatml/ukpls.hpp"
#include "spatml/varimp.hpp"

namespace spatml {

namespace {

// Land-use proportion columns are recognized by name prefix.
bool is_landuse_name(const std::string& name) { return name.rfind("lu_", 0) == 0; }

std::string trim(const std::string& s) {
  const std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, s.find_last_not_of(" \t\r") - a + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
  std::string w;
  for (char c : v) w.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (w == "true" || w == "1" || w == "yes" || w == "on") return true;
  if (w == "false" || w == "0" || w == "no" || w == "off") return false;
  throw ConfigError("config key " + key + ": not a boolean: " + v);
}

// Flat key=value config: each key names a long option of the chosen command;
// unknown keys are rejected.  Values are injected before the command-line
// tokens, so explicit flags win.
std::vector<std::string> config_tokens(const std::string& path, const CLI::App* cmd) {
  std::ifstream file(path);
  if (!file) throw IoError("cannot open config file: " + path);
  std::vector<std::string> tokens;
  std::string line;
  int lineno = 0;
  while (std::getline(file, line)) {
    ++lineno;
    const std::string text = trim(line.substr(0, line.find('#')));
    if (text.empty()) continue;
    const std::size_t eq = text.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    if (key.empty())
      throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
    if (key == "config")
      throw ConfigError("config files cannot nest (key 'config')");
    const CLI::Option* opt = cmd->get_option_no_throw("--" + key);
    if (opt == nullptr)
      throw ConfigError("unknown config key for '" + cmd->get_name() + "': " + key);
    if (opt->get_expected_min() == 0) {  // flag
      if (parse_bool(value, key)) tokens.push_back("--" + key);
    } else {
      tokens.push_back("--" + key + "=" + value);
    }
  }
  return tokens;
}

// Locate "--config PATH" / "--config=PATH" ahead of the real parse so file
// values can be spliced in after the command name.
std::string extract_config_path(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw ConfigError("--config expects a path");
      return args[i + 1];
    }
    if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
  }
  return "";
}

struct FitConfig {
  std::string model = "ukpls";
  std::string transform = "identity";
  std::string metric = "euclidean";
  bool screen = false;
  int components = 0;  // 0: choose by inner cross-validation
  int selection_folds = 5;
  int selection_max = 10;
  int trees = 200;
  int mtry = 0;
  int min_leaf = 5;
  int max_depth = 12;
  int rounds = 2;
  bool no_bootstrap = false;
  std::uint64_t seed = 0;
  unsigned workers = default_workers();
};

void add_fit_options(CLI::App* cmd, FitConfig& cfg) {
  cmd->add_option("--model", cfg.model, "Model kind")
      ->check(CLI::IsMember({"ukpls", "spatrf", "rf"}))
      ->capture_default_str();
  cmd->add_option("--transform", cfg.transform, "Outcome transform")
      ->check(CLI::IsMember({"identity", "log", "sqrt"}))
      ->capture_default_str();
  cmd->add_option("--metric", cfg.metric, "Distance metric")
      ->check(CLI::IsMember({"euclidean", "haversine_km"}))
      ->capture_default_str();
  cmd->add_flag("--screen", cfg.screen, "Screen covariates before fitting");
  cmd->add_option("--components", cfg.components,
                  "PLS component count (0 selects by inner CV)")
      ->capture_default_str();
  cmd->add_option("--selection-folds", cfg.selection_folds, "Inner CV folds for selection")
      ->capture_default_str();
  cmd->add_option("--selection-max", cfg.selection_max, "Largest component count scanned")
      ->capture_default_str();
  cmd->add_option("--trees", cfg.trees, "Number of trees")->capture_default_str();
  cmd->add_option("--mtry", cfg.mtry, "Covariates tried per split (0: ceil(p/3))")
      ->capture_default_str();
  cmd->add_option("--min-leaf", cfg.min_leaf, "Minimum rows per leaf")->capture_default_str();
  cmd->add_option("--max-depth", cfg.max_depth, "Maximum tree depth")->capture_default_str();
  cmd->add_option("--rounds", cfg.rounds, "Covariance-refit rounds per tree")
      ->capture_default_str();
  cmd->add_flag("--no-bootstrap", cfg.no_bootstrap, "Train every tree on the full sample");
  cmd->add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
  cmd->add_option("--workers", cfg.workers, "Worker thread count")->capture_default_str();
}

Dataset load_screened(const std::string& path, const FitConfig& cfg,
                      std::vector<ScreenExclusion>* exclusions) {
  Dataset data = read_dataset_csv(path, transform_from_string(cfg.transform),
                                  cfg.metric == "euclidean" ? Metric::euclidean
                                                            : Metric::haversine_km);
  if (!cfg.screen) return data;
  std::vector<bool> landuse;
  landuse.reserve(data.names().size());
  for (const std::string& name : data.names()) landuse.push_back(is_landuse_name(name));
  const ScreenResult screened = screen_covariates(data.covariates(), data.names(), landuse);
  if (exclusions) *exclusions = screened.excluded;
  for (const ScreenExclusion& ex : screened.excluded)
    std::cout << "screening excluded " << ex.name << " (" << ex.rule << ")\n";
  return data.retain_columns(screened.retained);
}

class UkPlsFactory final : public ModelFactory {
 public:
  explicit UkPlsFactory(UkPlsOptions options) : options_(options) {}
  std::unique_ptr<AdditiveSpatialModel> fit(const Dataset& train) const override {
    return std::make_unique<UkPlsModel>(fit_ukpls(train, options_));
  }
  std::string name() const override { return "ukpls"; }

 private:
  UkPlsOptions options_;
};

class SpatRfFactory final : public ModelFactory {
 public:
  SpatRfFactory(int trees, SpatRfHyper hyper, std::uint64_t seed, unsigned workers,
                std::string label)
      : trees_(trees), hyper_(hyper), seed_(seed), workers_(workers), label_(std::move(label)) {}
  std::unique_ptr<AdditiveSpatialModel> fit(const Dataset& train) const override {
    return std::make_unique<SpatRfModel>(fit_spatrf(train, trees_, hyper_, seed_, workers_));
  }
  std::string name() const override { return label_; }

 private:
  int trees_;
  SpatRfHyper hyper_;
  std::uint64_t seed_;
  unsigned workers_;
  std::string label_;
};

std::unique_ptr<ModelFactory> make_factory(const FitConfig& cfg, unsigned fit_workers) {
  if (cfg.model == "ukpls") {
    UkPlsOptions options;
    if (cfg.components > 0) options.components = cfg.components;
    options.selection_folds = cfg.selection_folds;
    options.selection_max = cfg.selection_max;
    options.seed = cfg.seed;
    return std::make_unique<UkPlsFactory>(options);
  }
  SpatRfHyper hyper;
  hyper.mtry = cfg.mtry;
  hyper.min_leaf = cfg.min_leaf;
  hyper.max_depth = cfg.max_depth;
  hyper.rounds = cfg.model == "rf" ? 0 : cfg.rounds;  // plain forest: no spatial adjustment
  hyper.bootstrap = !cfg.no_bootstrap;
  return std::make_unique<SpatRfFactory>(cfg.trees, hyper, cfg.seed, fit_workers, cfg.model);
}

// Covariates arranged to a trained model's schema, matched by column name.
Eigen::MatrixXd covariates_for_model(const AdditiveSpatialModel& model, const Dataset& data) {
  const std::vector<std::string>& want = model.training_data().names();
  Eigen::MatrixXd X(data.n(), static_cast<long>(want.size()));
  for (std::size_t j = 0; j < want.size(); ++j) {
    const auto it = std::find(data.names().begin(), data.names().end(), want[j]);
    if (it == data.names().end())
      throw SchemaError("input data lacks covariate column: " + want[j]);
    X.col(static_cast<long>(j)) =
        data.covariates().col(it - data.names().begin());
  }
  return X;
}

int cmd_simulate(const std::string& out, const std::string& sidecar, SyntheticSpec spec,
                 bool calibrate, int mc_draws) {
  if (calibrate) spec = calibrate_mean_scale(spec, mc_draws);
  const SyntheticData draw = generate(spec);
  write_dataset_csv(draw.data, out);
  write_synthetic_sidecar(spec, draw, sidecar.empty() ? out + ".meta.json" : sidecar);
  std::cout << "wrote " << draw.data.n() << " sites, " << draw.data.p() << " covariates to "
            << out << "\n";
  return 0;
}

int cmd_fit(const std::string& data_path, const std::string& out, const FitConfig& cfg) {
  const Dataset data = load_screened(data_path, cfg, nullptr);
  const std::unique_ptr<ModelFactory> factory = make_factory(cfg, cfg.workers);
  const std::unique_ptr<AdditiveSpatialModel> model = factory->fit(data);
  save_model(*model, out);
  std::cout << "fitted " << model->kind() << " on " << data.n() << " sites; model written to "
            << out << "\n";
  return 0;
}

int cmd_predict(const std::string& model_path, const std::string& data_path,
                const std::string& out) {
  const std::unique_ptr<AdditiveSpatialModel> model = load_model(model_path);
  const Metric metric = model->training_data().sites().front().metric;
  const Dataset data = read_dataset_csv(data_path, Transform::identity, metric);
  const Eigen::VectorXd pred =
      model->predict(covariates_for_model(*model, data), data.sites());

  std::ofstream file(out);
  if (!file) throw IoError("cannot open for writing: " + out);
  file << "site_id,prediction\n";
  for (long i = 0; i < pred.size(); ++i)
    file << data.sites()[static_cast<std::size_t>(i)].id << ',' << format_double(pred(i))
         << '\n';
  if (!file) throw IoError("failed writing " + out);
  std::cout << "wrote " << pred.size() << " predictions to " << out << "\n";
  return 0;
}

int cmd_cv(const std::string& data_path, const FitConfig& cfg, int folds,
           const std::string& out_json, const std::string& out_csv) {
  const Dataset data = load_screened(data_path, cfg, nullptr);
  // Workers drive the fold loop; model fits inside folds stay sequential.
  const std::unique_ptr<ModelFactory> factory = make_factory(cfg, 1);
  const CvResult cv = kfold_cv(*factory, data, folds, cfg.seed, cfg.workers);
  if (!out_json.empty()) write_cv_json(cv, factory->name(), out_json);
  if (!out_csv.empty()) write_cv_errors_csv(cv, data, out_csv);
  std::cout << factory->name() << " " << folds << "-fold R^2: " << format_double(cv.r2) << "\n";
  return 0;
}

int cmd_importance(const std::string& model_path, const std::string& data_path,
                   const std::string& levels_text, const std::string& policy_text,
                   unsigned workers, const std::string& out_csv, const std::string& out_json) {
  const std::unique_ptr<AdditiveSpatialModel> model = load_model(model_path);
  const Dataset& train = model->training_data();
  const Dataset data = read_dataset_csv(data_path, train.transform(),
                                        train.sites().front().metric);

  QuantileGrid grid;
  std::stringstream ss(levels_text);
  std::string token;
  while (std::getline(ss, token, ','))
    if (!token.empty()) grid.levels.push_back(std::stod(token));

  RefitPolicy policy;
  if (policy_text == "full") policy = RefitPolicy::full_refit;
  else if (policy_text == "weights") policy = RefitPolicy::weights_only;
  else policy = default_policy(data.n());

  const ImportanceTrajectory traj = compute_importance(*model, data, grid, policy, workers);
  if (!out_csv.empty()) write_importance_csv(traj, out_csv);
  if (!out_json.empty()) {
    const ContrastReport contrasts = quantile_contrasts(traj);
    write_importance_report(traj, contrasts, out_json);
    std::cout << "top covariate by |d31|: "
              << traj.names[static_cast<std::size_t>(contrasts.ranking.front())] << "\n";
  }
  return 0;
}

int cmd_report(const std::string& importance_path, const std::string& cv_path,
               const std::string& out) {
  using nlohmann::json;
  std::ostringstream text;

  std::ifstream in(importance_path);
  if (!in) throw IoError("cannot open for reading: " + importance_path);
  json imp;
  try {
    in >> imp;
  } catch (const json::exception& e) {
    throw SchemaError("cannot parse " + importance_path + ": " + e.what());
  }

  text << "Quantile-contrast variable importance\n";
  text << "policy: " << imp.at("policy").get<std::string>() << "\n\n";
  text << "rank  covariate             d21         d32         d31\n";
  const json& rows = imp.at("contrasts");
  const json& ranking = imp.at("ranking");
  for (std::size_t r = 0; r < ranking.size(); ++r) {
    const std::string name = ranking[r].get<std::string>();
    for (const json& row : rows) {
      if (row.at("covariate").get<std::string>() != name) continue;
      text << std::setw(4) << r + 1 << "  " << std::left << std::setw(20) << name << std::right
           << std::setw(11) << format_double(row.at("d21").get<double>()) << " "
           << std::setw(11) << format_double(row.at("d32").get<double>()) << " "
           << std::setw(11) << format_double(row.at("d31").get<double>()) << "\n";
      break;
    }
  }
  const std::size_t warning_count = imp.at("warnings").size();
  if (warning_count > 0)
    text << "\n" << warning_count << " per-site covariance re-fit fallback(s) recorded\n";

  if (!cv_path.empty()) {
    std::ifstream cv_in(cv_path);
    if (!cv_in) throw IoError("cannot open for reading: " + cv_path);
    json cv;
    try {
      cv_in >> cv;
    } catch (const json::exception& e) {
      throw SchemaError("cannot parse " + cv_path + ": " + e.what());
    }
    text << "\nCross-validation (" << cv.at("model").get<std::string>() << ", "
         << cv.at("folds").get<std::size_t>() << " folds): R^2 = "
         << format_double(cv.at("r2").get<double>()) << "\n";
  }

  if (out.empty()) {
    std::cout << text.str();
  } else {
    std::ofstream file(out);
    if (!file) throw IoError("cannot open for writing: " + out);
    file << text.str();
    if (!file) throw IoError("failed writing " + out);
  }
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Spatial prediction toolkit: universal kriging on PLS scores, "
               "spatially adjusted random forests, and leave-one-out quantile importance"};
  app.require_subcommand(1);
  // Command line must override config-file values, so repeated options keep
  // the last occurrence.
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  // simulate
  CLI::App* simulate = app.add_subcommand("simulate", "Generate a known-mechanism dataset");
  SyntheticSpec spec;
  bool no_calibrate = false;
  int mc_draws = 20000;
  std::string sim_out, sim_sidecar;
  simulate->add_option("--n", spec.n, "Sites")->capture_default_str();
  simulate->add_option("--p", spec.p, "Covariates")->capture_default_str();
  simulate->add_option("--block-size", spec.block_size, "Columns per correlated block")
      ->capture_default_str();
  simulate->add_option("--block-corr", spec.block_corr, "Within-block correlation")
      ->capture_default_str();
  simulate->add_option("--domain-side", spec.domain_side, "Square domain side length")
      ->capture_default_str();
  simulate->add_option("--psill", spec.spatial.psill, "Spatial field partial sill")
      ->capture_default_str();
  simulate->add_option("--range", spec.spatial.range, "Spatial field range")
      ->capture_default_str();
  simulate->add_option("--nugget-sd", spec.nugget_sd, "Iid noise standard deviation")
      ->capture_default_str();
  simulate->add_option("--mean-scale", spec.mean_scale, "Mean-surface scale factor")
      ->capture_default_str();
  simulate->add_option("--seed", spec.seed, "Random seed")->capture_default_str();
  simulate->add_flag("--no-calibrate", no_calibrate,
                     "Skip Monte-Carlo calibration of the mean scale");
  simulate->add_option("--mc-draws", mc_draws, "Monte-Carlo draws for calibration")
      ->capture_default_str();
  simulate->add_option("--out", sim_out, "Output dataset CSV")->required();
  simulate->add_option("--sidecar", sim_sidecar, "Sidecar JSON path (default <out>.meta.json)");

  // fit
  CLI::App* fit = app.add_subcommand("fit", "Fit a model and save it");
  FitConfig fit_cfg;
  std::string fit_data, fit_out;
  fit->add_option("--data", fit_data, "Training dataset CSV")->required();
  fit->add_option("--out", fit_out, "Model JSON path")->required();
  add_fit_options(fit, fit_cfg);

  // predict
  CLI::App* predict = app.add_subcommand("predict", "Predict at new sites with a saved model");
  std::string pred_model, pred_data, pred_out;
  predict->add_option("--model-file", pred_model, "Model JSON path")->required();
  predict->add_option("--data", pred_data, "Dataset CSV with covariates and sites")->required();
  predict->add_option("--out", pred_out, "Predictions CSV path")->required();

  // cv
  CLI::App* cv = app.add_subcommand("cv", "k-fold cross-validation");
  FitConfig cv_cfg;
  std::string cv_data, cv_out_json, cv_out_csv;
  int cv_folds = 10;
  cv->add_option("--data", cv_data, "Dataset CSV")->required();
  cv->add_option("--folds", cv_folds, "Fold count")->capture_default_str();
  cv->add_option("--out-json", cv_out_json, "Summary JSON path");
  cv->add_option("--out-csv", cv_out_csv, "Per-site errors CSV path");
  add_fit_options(cv, cv_cfg);

  // importance
  CLI::App* importance = app.add_subcommand("importance", "Quantile-contrast importance");
  std::string imp_model, imp_data, imp_levels = "0.25,0.5,0.75", imp_policy = "auto";
  std::string imp_out_csv, imp_out_json;
  unsigned imp_workers = default_workers();
  importance->add_option("--model-file", imp_model, "Model JSON path")->required();
  importance->add_option("--data", imp_data, "Training dataset CSV")->required();
  importance->add_option("--quantiles", imp_levels, "Comma-separated quantile levels")
      ->capture_default_str();
  importance->add_option("--policy", imp_policy, "Covariance handling per left-out site")
      ->check(CLI::IsMember({"auto", "full", "weights"}))
      ->capture_default_str();
  importance->add_option("--workers", imp_workers, "Worker thread count")
      ->capture_default_str();
  importance->add_option("--out-csv", imp_out_csv, "Trajectory CSV path");
  importance->add_option("--out-json", imp_out_json, "Contrast report JSON path");

  // report
  CLI::App* report = app.add_subcommand("report", "Render a text summary of result files");
  std::string rep_importance, rep_cv, rep_out;
  report->add_option("--importance", rep_importance, "Importance report JSON")->required();
  report->add_option("--cv", rep_cv, "Cross-validation summary JSON");
  report->add_option("--out", rep_out, "Output text path (default: stdout)");

  std::string config_path;
  for (CLI::App* cmd : {simulate, fit, predict, cv, importance, report})
    cmd->add_option("--config", config_path,
                    "Flat key=value config file; command-line options win");

  try {
    std::vector<std::string> merged = args;
    const std::string cfg = extract_config_path(args);
    if (!cfg.empty()) {
      if (merged.empty() || merged.front().empty() || merged.front()[0] == '-')
        throw ConfigError("--config requires a command");
      const CLI::App* cmd = app.get_subcommand_no_throw(merged.front());
      if (cmd == nullptr) throw ConfigError("unknown command: " + merged.front());
      const std::vector<std::string> extra = config_tokens(cfg, cmd);
      merged.insert(merged.begin() + 1, extra.begin(), extra.end());
    }
    std::vector<std::string> reversed(merged.rbegin(), merged.rend());
    app.parse(reversed);

    if (simulate->parsed())
      return cmd_simulate(sim_out, sim_sidecar, spec, !no_calibrate, mc_draws);
    if (fit->parsed()) return cmd_fit(fit_data, fit_out, fit_cfg);
    if (predict->parsed()) return cmd_predict(pred_model, pred_data, pred_out);
    if (cv->parsed()) return cmd_cv(cv_data, cv_cfg, cv_folds, cv_out_json, cv_out_csv);
    if (importance->parsed())
      return cmd_importance(imp_model, imp_data, imp_levels, imp_policy, imp_workers,
                            imp_out_csv, imp_out_json);
    if (report->parsed()) return cmd_report(rep_importance, rep_cv, rep_out);
    return 1;
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const Error& e) {
    std::cerr << nlohmann::json{{"error", {{"kind", e.kind()}, {"message", e.what()}}}}.dump()
              << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", {{"kind", "internal"}, {"message", e.what()}}}}.dump()
              << std::endl;
    return 1;
  }
}

}  // namespace spatml
