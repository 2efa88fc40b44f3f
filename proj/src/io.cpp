#include "spatml/io.hpp"

#include <charconv>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <system_error>

namespace spatml {

using nlohmann::json;

namespace {

std::ifstream open_for_read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  return in;
}

std::ofstream open_for_write(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  return out;
}

double parse_double(const std::string& field, const std::string& context) {
  double v = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc{} || res.ptr != end)
    throw IoError("cannot parse number '" + field + "' in " + context);
  return v;
}

long parse_long(const std::string& field, const std::string& context) {
  long v = 0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc{} || res.ptr != end)
    throw IoError("cannot parse integer '" + field + "' in " + context);
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

json sites_to_json(const std::vector<Location>& sites) {
  json arr = json::array();
  for (const Location& s : sites) arr.push_back({{"id", s.id}, {"x", s.x}, {"y", s.y}});
  return arr;
}

std::vector<Location> sites_from_json(const json& arr, Metric metric) {
  std::vector<Location> sites;
  sites.reserve(arr.size());
  for (const json& s : arr)
    sites.push_back(Location{s.at("id").get<long>(), s.at("x").get<double>(),
                             s.at("y").get<double>(), metric});
  return sites;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (long i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

Eigen::VectorXd vector_from_json(const json& arr) {
  Eigen::VectorXd v(static_cast<long>(arr.size()));
  for (long i = 0; i < v.size(); ++i) v(i) = arr[static_cast<std::size_t>(i)].get<double>();
  return v;
}

json matrix_to_json(const Eigen::MatrixXd& M) {  // row-major nested arrays
  json rows = json::array();
  for (long i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (long j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& rows) {
  const long n = static_cast<long>(rows.size());
  const long p = n > 0 ? static_cast<long>(rows[0].size()) : 0;
  Eigen::MatrixXd M(n, p);
  for (long i = 0; i < n; ++i) {
    const json& row = rows[static_cast<std::size_t>(i)];
    if (static_cast<long>(row.size()) != p) throw SchemaError("ragged matrix in model file");
    for (long j = 0; j < p; ++j) M(i, j) = row[static_cast<std::size_t>(j)].get<double>();
  }
  return M;
}

json params_to_json(const CovarianceParams& p) {
  return {{"nugget", p.nugget}, {"psill", p.psill}, {"range", p.range}};
}

CovarianceParams params_from_json(const json& j) {
  return {j.at("nugget").get<double>(), j.at("psill").get<double>(),
          j.at("range").get<double>()};
}

Metric metric_from_string(const std::string& s) {
  if (s == "euclidean") return Metric::euclidean;
  if (s == "haversine_km") return Metric::haversine_km;
  throw SchemaError("unknown metric tag: " + s);
}

std::string metric_to_string(Metric m) {
  return m == Metric::euclidean ? "euclidean" : "haversine_km";
}

json dataset_to_json(const Dataset& data) {
  return {{"covariates", matrix_to_json(data.covariates())},
          {"outcome", vector_to_json(data.outcome())},
          {"sites", sites_to_json(data.sites())},
          {"metric", metric_to_string(data.sites().front().metric)},
          {"names", data.names()},
          {"transform", to_string(data.transform())}};
}

Dataset dataset_from_json(const json& j) {
  const Metric metric = metric_from_string(j.at("metric").get<std::string>());
  return Dataset(matrix_from_json(j.at("covariates")), vector_from_json(j.at("outcome")),
                 sites_from_json(j.at("sites"), metric),
                 j.at("names").get<std::vector<std::string>>(),
                 transform_from_string(j.at("transform").get<std::string>()));
}

LinkFunction link_from_json(const json& j) {
  const std::string tag = j.get<std::string>();
  if (tag == "identity") return {LinkKind::identity};
  if (tag == "log") return {LinkKind::log};
  throw SchemaError("unknown link tag: " + tag);
}

std::string link_to_string(LinkFunction link) {
  return link.kind == LinkKind::identity ? "identity" : "log";
}

void check_version(const json& j, const std::string& path) {
  if (!j.contains("format_version"))
    throw SchemaError("missing format_version in " + path);
  const int v = j.at("format_version").get<int>();
  if (v != kFormatVersion)
    throw SchemaError("unsupported format_version " + std::to_string(v) + " in " + path +
                      " (expected " + std::to_string(kFormatVersion) + ")");
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

Dataset read_dataset_csv(const std::string& path, Transform transform, Metric metric) {
  std::ifstream in = open_for_read(path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty dataset file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();

  const std::vector<std::string> header = split_csv_line(line);
  long id_col = -1, x_col = -1, y_col = -1, outcome_col = -1;
  std::vector<long> cov_cols;
  std::vector<std::string> names;
  for (long c = 0; c < static_cast<long>(header.size()); ++c) {
    const std::string& h = header[static_cast<std::size_t>(c)];
    if (h == "site_id") id_col = c;
    else if (h == "x") x_col = c;
    else if (h == "y") y_col = c;
    else if (h == "outcome") outcome_col = c;
    else {
      cov_cols.push_back(c);
      names.push_back(h);
    }
  }
  if (id_col < 0 || x_col < 0 || y_col < 0 || outcome_col < 0)
    throw SchemaError("dataset header must contain site_id,x,y,outcome: " + path);
  if (cov_cols.empty()) throw SchemaError("dataset has no covariate columns: " + path);

  std::vector<std::vector<double>> rows;
  std::vector<Location> sites;
  std::vector<double> outcome;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw IoError("wrong field count at line " + std::to_string(line_no) + " of " + path);
    const std::string context = path + ":" + std::to_string(line_no);
    Location s;
    s.id = parse_long(fields[static_cast<std::size_t>(id_col)], context);
    s.x = parse_double(fields[static_cast<std::size_t>(x_col)], context);
    s.y = parse_double(fields[static_cast<std::size_t>(y_col)], context);
    s.metric = metric;
    sites.push_back(s);
    outcome.push_back(parse_double(fields[static_cast<std::size_t>(outcome_col)], context));
    std::vector<double> row;
    row.reserve(cov_cols.size());
    for (long c : cov_cols) row.push_back(parse_double(fields[static_cast<std::size_t>(c)], context));
    rows.push_back(std::move(row));
  }

  const long n = static_cast<long>(rows.size());
  Eigen::MatrixXd X(n, static_cast<long>(cov_cols.size()));
  Eigen::VectorXd y(n);
  for (long i = 0; i < n; ++i) {
    y(i) = outcome[static_cast<std::size_t>(i)];
    for (long j = 0; j < X.cols(); ++j)
      X(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  return Dataset(std::move(X), std::move(y), std::move(sites), std::move(names), transform);
}

void write_dataset_csv(const Dataset& data, const std::string& path) {
  std::ofstream out = open_for_write(path);
  out << "site_id,x,y,outcome";
  for (const std::string& name : data.names()) out << ',' << name;
  out << '\n';
  for (long i = 0; i < data.n(); ++i) {
    const Location& s = data.sites()[static_cast<std::size_t>(i)];
    out << s.id << ',' << format_double(s.x) << ',' << format_double(s.y) << ','
        << format_double(data.outcome()(i));
    for (long j = 0; j < data.p(); ++j) out << ',' << format_double(data.covariates()(i, j));
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

void save_model(const AdditiveSpatialModel& model, const std::string& path) {
  json j;
  j["format_version"] = kFormatVersion;
  j["kind"] = model.kind();
  j["link"] = link_to_string(model.link());
  j["training"] = dataset_to_json(model.training_data());

  if (const auto* uk = dynamic_cast<const UkPlsModel*>(&model)) {
    const PlsProjection& proj = uk->projection();
    j["projection"] = {{"center", vector_to_json(proj.center)},
                       {"scale", vector_to_json(proj.scale)},
                       {"weights", matrix_to_json(proj.weights)},
                       {"components", proj.components}};
    j["beta"] = vector_to_json(uk->beta());
    j["theta"] = params_to_json(uk->covariance().params());
    j["residuals"] = vector_to_json(uk->covariance().residuals());
  } else if (const auto* rf = dynamic_cast<const SpatRfModel*>(&model)) {
    const SpatRfHyper& h = rf->hyper();
    j["hyper"] = {{"mtry", h.mtry},
                  {"min_leaf", h.min_leaf},
                  {"max_depth", h.max_depth},
                  {"rounds", h.rounds},
                  {"bootstrap", h.bootstrap}};
    j["seed"] = rf->seed();
    json trees = json::array();
    for (const SpatialTree& t : rf->trees()) {
      json nodes = json::array();
      for (const TreeNode& nd : t.nodes)
        nodes.push_back({{"feature", nd.feature},
                         {"threshold", nd.threshold},
                         {"left", nd.left},
                         {"right", nd.right},
                         {"value", nd.value}});
      trees.push_back({{"nodes", std::move(nodes)},
                       {"theta", params_to_json(t.theta)},
                       {"residuals", vector_to_json(t.cov->residuals())},
                       {"bootstrap_rows", t.bootstrap_rows}});
    }
    j["trees"] = std::move(trees);
  } else {
    throw SchemaError("cannot serialize model kind: " + model.kind());
  }

  std::ofstream out = open_for_write(path);
  out << j.dump(1, '\t') << '\n';
  if (!out) throw IoError("failed writing " + path);
}

std::unique_ptr<AdditiveSpatialModel> load_model(const std::string& path) {
  std::ifstream in = open_for_read(path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw SchemaError("cannot parse model file " + path + ": " + e.what());
  }
  try {
    check_version(j, path);
    Dataset train = dataset_from_json(j.at("training"));
    const LinkFunction link = link_from_json(j.at("link"));
    const std::string kind = j.at("kind").get<std::string>();

    if (kind == "ukpls") {
      const json& pj = j.at("projection");
      PlsProjection proj;
      proj.center = vector_from_json(pj.at("center"));
      proj.scale = vector_from_json(pj.at("scale"));
      proj.weights = matrix_from_json(pj.at("weights"));
      proj.components = pj.at("components").get<int>();
      FittedCovariance cov(params_from_json(j.at("theta")), train.sites(),
                           vector_from_json(j.at("residuals")));
      return std::make_unique<UkPlsModel>(std::move(train), std::move(proj),
                                          vector_from_json(j.at("beta")), std::move(cov), link);
    }
    if (kind == "spatrf") {
      const json& hj = j.at("hyper");
      SpatRfHyper hyper{hj.at("mtry").get<int>(), hj.at("min_leaf").get<int>(),
                        hj.at("max_depth").get<int>(), hj.at("rounds").get<int>(),
                        hj.at("bootstrap").get<bool>()};
      std::vector<SpatialTree> trees;
      for (const json& tj : j.at("trees")) {
        SpatialTree t;
        for (const json& nj : tj.at("nodes"))
          t.nodes.push_back(TreeNode{nj.at("feature").get<int>(),
                                     nj.at("threshold").get<double>(), nj.at("left").get<int>(),
                                     nj.at("right").get<int>(), nj.at("value").get<double>()});
        t.theta = params_from_json(tj.at("theta"));
        t.cov = std::make_shared<FittedCovariance>(t.theta, train.sites(),
                                                   vector_from_json(tj.at("residuals")));
        t.bootstrap_rows = tj.at("bootstrap_rows").get<std::vector<int>>();
        trees.push_back(std::move(t));
      }
      return std::make_unique<SpatRfModel>(std::move(train), std::move(trees), hyper,
                                           j.at("seed").get<std::uint64_t>(), link);
    }
    throw SchemaError("unknown model kind in " + path + ": " + kind);
  } catch (const json::exception& e) {
    throw SchemaError("model file " + path + " is missing fields: " + e.what());
  }
}

void write_importance_csv(const ImportanceTrajectory& traj, const std::string& path) {
  std::ofstream out = open_for_write(path);
  out << "covariate,q_level,quantile_value,mu_bar\n";
  for (long j = 0; j < traj.mu_bar.rows(); ++j)
    for (long l = 0; l < traj.mu_bar.cols(); ++l)
      out << traj.names[static_cast<std::size_t>(j)] << ','
          << format_double(traj.levels[static_cast<std::size_t>(l)]) << ','
          << format_double(traj.quantile_values(j, l)) << ','
          << format_double(traj.mu_bar(j, l)) << '\n';
  if (!out) throw IoError("failed writing " + path);
}

void write_importance_report(const ImportanceTrajectory& traj, const ContrastReport& contrasts,
                             const std::string& path) {
  json rows = json::array();
  for (const ContrastRow& row : contrasts.rows)
    rows.push_back({{"covariate", row.name},
                    {"index", row.column},
                    {"d21", row.d21},
                    {"d32", row.d32},
                    {"d31", row.d31}});
  json ranking = json::array();
  for (int idx : contrasts.ranking) ranking.push_back(traj.names[static_cast<std::size_t>(idx)]);
  json warnings = json::array();
  for (const ImportanceWarning& w : traj.warnings)
    warnings.push_back({{"site", w.site},
                        {"component", w.component},
                        {"covariate", w.covariate},
                        {"level", w.level},
                        {"message", w.message}});
  const json j = {{"format_version", kFormatVersion},
                  {"policy", traj.policy == RefitPolicy::full_refit ? "full_refit" : "weights_only"},
                  {"levels", traj.levels},
                  {"contrasts", std::move(rows)},
                  {"ranking", std::move(ranking)},
                  {"warnings", std::move(warnings)}};
  std::ofstream out = open_for_write(path);
  out << j.dump(1, '\t') << '\n';
  if (!out) throw IoError("failed writing " + path);
}

void write_cv_json(const CvResult& cv, const std::string& model_name, const std::string& path) {
  const json j = {{"format_version", kFormatVersion},
                  {"model", model_name},
                  {"folds", cv.fold_r2.size()},
                  {"r2", cv.r2},
                  {"per_fold_r2", cv.fold_r2}};
  std::ofstream out = open_for_write(path);
  out << j.dump(1, '\t') << '\n';
  if (!out) throw IoError("failed writing " + path);
}

void write_cv_errors_csv(const CvResult& cv, const Dataset& data, const std::string& path) {
  std::ofstream out = open_for_write(path);
  out << "site_id,fold,y,y_hat,error\n";
  for (long i = 0; i < data.n(); ++i)
    out << data.sites()[static_cast<std::size_t>(i)].id << ','
        << cv.fold_of_row[static_cast<std::size_t>(i)] << ','
        << format_double(data.outcome()(i)) << ',' << format_double(cv.predictions(i)) << ','
        << format_double(cv.errors(i)) << '\n';
  if (!out) throw IoError("failed writing " + path);
}

void write_synthetic_sidecar(const SyntheticSpec& spec, const SyntheticData& draw,
                             const std::string& path) {
  const std::vector<std::string> names = synthetic_names(spec);
  json active = json::array();
  for (int idx : draw.active_columns)
    active.push_back({{"index", idx}, {"name", names[static_cast<std::size_t>(idx)]}});
  const json j = {
      {"format_version", kFormatVersion},
      {"spec",
       {{"n", spec.n},
        {"p", spec.p},
        {"block_size", spec.block_size},
        {"block_corr", spec.block_corr},
        {"domain_side", spec.domain_side},
        {"spatial", params_to_json(spec.spatial)},
        {"nugget_sd", spec.nugget_sd},
        {"mean_scale", spec.mean_scale},
        {"seed", spec.seed},
        {"coefficients",
         {{"dist_major", spec.coef.dist_major},
          {"popden_squared", spec.coef.popden_squared},
          {"ndvi", spec.coef.ndvi},
          {"sqrt_mixed_urban", spec.coef.sqrt_mixed_urban},
          {"residential", spec.coef.residential},
          {"dist_ndvi", spec.coef.dist_ndvi}}}}},
      {"active", std::move(active)},
      {"variance_targets",
       {{"mean", kSyntheticVarianceTargets[0]},
        {"spatial", kSyntheticVarianceTargets[1]},
        {"nugget", kSyntheticVarianceTargets[2]}}},
      {"realized_variance",
       {{"mean", draw.realized_variance[0]},
        {"spatial", draw.realized_variance[1]},
        {"nugget", draw.realized_variance[2]}}}};
  std::ofstream out = open_for_write(path);
  out << j.dump(1, '\t') << '\n';
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace spatml
