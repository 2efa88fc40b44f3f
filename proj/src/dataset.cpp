#include "spatml/dataset.hpp"

#include <cmath>
#include <set>
#include <utility>

namespace spatml {

namespace {

constexpr double kEarthRadiusKm = 6371.0;
constexpr double kDegToRad = 3.14159265358979323846 / 180.0;

double haversine_km(double lon1, double lat1, double lon2, double lat2) {
  const double phi1 = lat1 * kDegToRad;
  const double phi2 = lat2 * kDegToRad;
  const double dphi = (lat2 - lat1) * kDegToRad;
  const double dlam = (lon2 - lon1) * kDegToRad;
  const double a = std::sin(dphi / 2) * std::sin(dphi / 2) +
                   std::cos(phi1) * std::cos(phi2) * std::sin(dlam / 2) * std::sin(dlam / 2);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

void check_location(const Location& s) {
  if (!std::isfinite(s.x) || !std::isfinite(s.y))
    throw DomainError("location coordinates must be finite");
  if (s.metric == Metric::haversine_km) {
    if (s.x < -180.0 || s.x > 180.0 || s.y < -90.0 || s.y > 90.0)
      throw DomainError("haversine locations need lon in [-180,180], lat in [-90,90]");
  }
}

}  // namespace

double distance(const Location& a, const Location& b) {
  if (a.metric != b.metric) throw ConfigError("cannot mix distance metrics");
  if (a.metric == Metric::haversine_km) return haversine_km(a.x, a.y, b.x, b.y);
  return std::hypot(a.x - b.x, a.y - b.y);
}

Eigen::MatrixXd pairwise_distances(const std::vector<Location>& sites) {
  const long n = static_cast<long>(sites.size());
  Eigen::MatrixXd D(n, n);
  for (long i = 0; i < n; ++i) {
    D(i, i) = 0.0;
    for (long j = i + 1; j < n; ++j) {
      const double d = distance(sites[i], sites[j]);
      D(i, j) = d;
      D(j, i) = d;
    }
  }
  return D;
}

Eigen::MatrixXd cross_distances(const std::vector<Location>& a, const std::vector<Location>& b) {
  Eigen::MatrixXd D(static_cast<long>(a.size()), static_cast<long>(b.size()));
  for (long i = 0; i < D.rows(); ++i)
    for (long j = 0; j < D.cols(); ++j) D(i, j) = distance(a[i], b[j]);
  return D;
}

Transform transform_from_string(const std::string& s) {
  if (s == "identity") return Transform::identity;
  if (s == "log") return Transform::log;
  if (s == "sqrt") return Transform::sqrt;
  throw ConfigError("unknown outcome transform: " + s);
}

std::string to_string(Transform t) {
  switch (t) {
    case Transform::identity: return "identity";
    case Transform::log: return "log";
    case Transform::sqrt: return "sqrt";
  }
  throw ConfigError("unreachable transform tag");
}

Eigen::VectorXd apply_transform(const Eigen::VectorXd& y, Transform t) {
  switch (t) {
    case Transform::identity:
      return y;
    case Transform::log:
      for (long i = 0; i < y.size(); ++i)
        if (!(y(i) > 0.0))
          throw DomainError("log transform needs positive outcomes; offending index " +
                            std::to_string(i));
      return y.array().log();
    case Transform::sqrt:
      for (long i = 0; i < y.size(); ++i)
        if (!(y(i) >= 0.0))
          throw DomainError("sqrt transform needs nonnegative outcomes; offending index " +
                            std::to_string(i));
      return y.array().sqrt();
  }
  throw ConfigError("unreachable transform tag");
}

Eigen::VectorXd invert_transform(const Eigen::VectorXd& y, Transform t) {
  switch (t) {
    case Transform::identity: return y;
    case Transform::log: return y.array().exp();
    case Transform::sqrt: return y.array().square();
  }
  throw ConfigError("unreachable transform tag");
}

double invert_transform(double value, Transform t) {
  switch (t) {
    case Transform::identity: return value;
    case Transform::log: return std::exp(value);
    case Transform::sqrt: return value * value;
  }
  throw ConfigError("unreachable transform tag");
}

double LinkFunction::apply(double mu) const {
  if (kind == LinkKind::log) {
    if (mu <= 0.0) throw DomainError("log link needs a positive mean");
    return std::log(mu);
  }
  return mu;
}

double LinkFunction::invert(double eta) const {
  return kind == LinkKind::log ? std::exp(eta) : eta;
}

Dataset::Dataset(Eigen::MatrixXd X, Eigen::VectorXd y, std::vector<Location> sites,
                 std::vector<std::string> names, Transform transform)
    : X_(std::move(X)), y_(std::move(y)), sites_(std::move(sites)),
      names_(std::move(names)), transform_(transform) {
  const long n = X_.rows();
  if (n < 3) throw DimensionError("dataset needs at least 3 rows");
  if (X_.cols() < 1) throw DimensionError("dataset needs at least 1 covariate");
  if (y_.size() != n) throw DimensionError("outcome length does not match covariate rows");
  if (static_cast<long>(sites_.size()) != n)
    throw DimensionError("site count does not match covariate rows");
  if (static_cast<long>(names_.size()) != X_.cols())
    throw DimensionError("name count does not match covariate columns");
  if (!X_.allFinite()) throw DomainError("covariates contain NaN or Inf");
  if (!y_.allFinite()) throw DomainError("outcome contains NaN or Inf");

  std::set<long> ids;
  const Metric metric = sites_.front().metric;
  for (const Location& s : sites_) {
    check_location(s);
    if (s.metric != metric) throw ConfigError("all sites must share one metric");
    if (!ids.insert(s.id).second) throw DomainError("duplicate site id in dataset");
  }
  apply_transform(y_, transform_);  // validates the outcome's domain up front
}

Dataset Dataset::subset(const std::vector<int>& rows) const {
  Eigen::MatrixXd X(static_cast<long>(rows.size()), X_.cols());
  Eigen::VectorXd y(static_cast<long>(rows.size()));
  std::vector<Location> sites;
  sites.reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const int r = rows[k];
    if (r < 0 || r >= n()) throw DimensionError("row index out of range in subset");
    X.row(static_cast<long>(k)) = X_.row(r);
    y(static_cast<long>(k)) = y_(r);
    sites.push_back(sites_[static_cast<std::size_t>(r)]);
  }
  return Dataset(std::move(X), std::move(y), std::move(sites), names_, transform_);
}

Dataset Dataset::retain_columns(const std::vector<int>& cols) const {
  Eigen::MatrixXd X(n(), static_cast<long>(cols.size()));
  std::vector<std::string> names;
  names.reserve(cols.size());
  for (std::size_t k = 0; k < cols.size(); ++k) {
    const int c = cols[k];
    if (c < 0 || c >= p()) throw DimensionError("column index out of range in retain_columns");
    X.col(static_cast<long>(k)) = X_.col(c);
    names.push_back(names_[static_cast<std::size_t>(c)]);
  }
  return Dataset(std::move(X), y_, sites_, std::move(names), transform_);
}

}  // namespace spatml
