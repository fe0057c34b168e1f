#include "gengap/predictor.hpp"

#include <cmath>
#include <limits>
#include <string>

#include <nlohmann/json.hpp>

#include "gengap/error.hpp"

namespace gengap {

namespace {

// exp(-745) is the smallest double exponent that does not flush to zero.
constexpr double kUnderflowGap = 745.0;

void check_sigma(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw InvalidArgument("sigma must be positive and finite (got " + std::to_string(sigma) + ")");
}

}  // namespace

Point posterior_mean(const Point& x, double sigma, const PointMatrix& points) {
  check_sigma(sigma);
  if (points.rows() == 0) throw InvalidArgument("posterior mean over an empty point set");
  if (x.size() != points.cols()) throw InvalidArgument("point dimension mismatch");
  if (points.rows() == 1) return points.row(0).transpose();

  const double scale = -0.5 / (sigma * sigma);
  const Eigen::VectorXd logw = (points.rowwise() - x.transpose()).rowwise().squaredNorm() * scale;

  Eigen::Index top = 0;
  double top_w = logw[0];
  double runner_up = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 1; i < logw.size(); ++i) {
    if (logw[i] > top_w) {
      runner_up = top_w;
      top_w = logw[i];
      top = i;
    } else if (logw[i] > runner_up) {
      runner_up = logw[i];
    }
  }
  if (top_w - runner_up > kUnderflowGap) return points.row(top).transpose();

  const Eigen::VectorXd w = (logw.array() - top_w).exp().matrix();
  return (points.transpose() * w) / w.sum();
}

Point error_prone_predict(const Point& x, double sigma, double delta, const PointMatrix& points) {
  if (!(delta >= 0.0) || !std::isfinite(delta)) throw InvalidArgument("delta must be >= 0");
  if (delta == 0.0) return posterior_mean(x, sigma, points);
  check_sigma(sigma);
  const double s2 = sigma * sigma;
  const double d2 = delta * delta;
  const Point y_star = posterior_mean(x, std::sqrt(s2 + d2), points);
  return (d2 * x + s2 * y_star) / (s2 + d2);
}

double decomposition_residual(const Point& x, double sigma, double delta,
                              const PointMatrix& points) {
  const Point y_delta = error_prone_predict(x, sigma, delta, points);
  const double s2 = sigma * sigma;
  const double d2 = delta * delta;
  const Point y_star = posterior_mean(x, std::sqrt(s2 + d2), points);
  return ((y_delta - x) - (s2 / (s2 + d2)) * (y_star - x)).norm();
}

std::string_view to_string(PredictorKind k) {
  switch (k) {
    case PredictorKind::kOptimal: return "optimal";
    case PredictorKind::kErrorProne: return "error_prone";
    case PredictorKind::kConditional: return "conditional";
    case PredictorKind::kGuided: return "guided";
  }
  return "?";
}

PredictorKind parse_predictor_kind(std::string_view s) {
  if (s == "optimal") return PredictorKind::kOptimal;
  if (s == "error_prone") return PredictorKind::kErrorProne;
  if (s == "conditional") return PredictorKind::kConditional;
  if (s == "guided") return PredictorKind::kGuided;
  throw InvalidArgument("unknown predictor kind '" + std::string(s) + "'");
}

PredictorSpec PredictorSpec::optimal() { return {}; }

PredictorSpec PredictorSpec::error_prone(double delta) {
  PredictorSpec s;
  s.kind = PredictorKind::kErrorProne;
  s.delta = delta;
  return s;
}

PredictorSpec PredictorSpec::conditional(double delta, std::optional<int> class_id) {
  PredictorSpec s;
  s.kind = PredictorKind::kConditional;
  s.delta = delta;
  s.class_id = class_id;
  return s;
}

PredictorSpec PredictorSpec::guided(PredictorSpec primary, PredictorSpec auxiliary,
                                    double weight) {
  PredictorSpec s;
  s.kind = PredictorKind::kGuided;
  s.weight = weight;
  s.primary = std::make_shared<const PredictorSpec>(std::move(primary));
  s.auxiliary = std::make_shared<const PredictorSpec>(std::move(auxiliary));
  return s;
}

void PredictorSpec::validate(int num_classes) const {
  if (!(delta >= 0.0) || !std::isfinite(delta)) throw InvalidArgument("delta must be >= 0");
  switch (kind) {
    case PredictorKind::kOptimal:
      if (delta != 0.0) throw InvalidArgument("optimal predictor has delta = 0");
      break;
    case PredictorKind::kErrorProne:
      break;
    case PredictorKind::kConditional:
      if (class_id && (*class_id < 0 || *class_id >= num_classes))
        throw InvalidArgument("conditional class " + std::to_string(*class_id) +
                              " is not in the partition (k=" + std::to_string(num_classes) + ")");
      break;
    case PredictorKind::kGuided:
      if (!primary || !auxiliary)
        throw InvalidArgument("guided predictor needs primary and auxiliary");
      if (!(weight >= 0.0) || !std::isfinite(weight))
        throw InvalidArgument("guidance weight must be >= 0");
      primary->validate(num_classes);
      auxiliary->validate(num_classes);
      break;
  }
}

bool PredictorSpec::needs_condition() const {
  if (kind == PredictorKind::kConditional) return !class_id.has_value();
  if (kind == PredictorKind::kGuided)
    return primary->needs_condition() || auxiliary->needs_condition();
  return false;
}

nlohmann::json to_json(const PredictorSpec& spec) {
  nlohmann::json j;
  j["kind"] = to_string(spec.kind);
  if (spec.kind != PredictorKind::kGuided) j["delta"] = spec.delta;
  if (spec.class_id) j["class_id"] = *spec.class_id;
  if (spec.kind == PredictorKind::kGuided) {
    j["weight"] = spec.weight;
    j["primary"] = to_json(*spec.primary);
    j["auxiliary"] = to_json(*spec.auxiliary);
  }
  return j;
}

PredictorSpec predictor_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidArgument("predictor spec must be a JSON object");
  PredictorSpec s;
  s.kind = parse_predictor_kind(j.at("kind").get<std::string>());
  s.delta = j.value("delta", 0.0);
  if (j.contains("class_id") && !j["class_id"].is_null()) s.class_id = j["class_id"].get<int>();
  if (s.kind == PredictorKind::kGuided) {
    s.weight = j.value("weight", 0.0);
    if (!j.contains("primary") || !j.contains("auxiliary"))
      throw InvalidArgument("guided predictor needs 'primary' and 'auxiliary'");
    s.primary = std::make_shared<const PredictorSpec>(predictor_from_json(j["primary"]));
    s.auxiliary = std::make_shared<const PredictorSpec>(predictor_from_json(j["auxiliary"]));
  }
  return s;
}

Denoiser::Denoiser(PredictorSpec spec, const PointDataset& ds) : spec_(std::move(spec)) {
  ds.validate();
  auto index = std::make_shared<TrainIndex>();
  index->all = ds.split_points(Split::kTrain);
  if (index->all.rows() == 0) throw InvalidArgument("dataset has no train points");

  const auto labels = ds.split_labels(Split::kTrain);
  const int k = ds.num_classes();
  std::vector<std::vector<Eigen::Index>> rows(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < labels.size(); ++i)
    rows[static_cast<std::size_t>(labels[i])].push_back(static_cast<Eigen::Index>(i));
  index->by_class.reserve(rows.size());
  for (const auto& r : rows) index->by_class.emplace_back(index->all(r, Eigen::all));

  spec_.validate(k);
  index_ = std::move(index);
}

Eigen::Index Denoiser::dim() const { return index_->all.cols(); }
const PointMatrix& Denoiser::train_points() const { return index_->all; }

Point Denoiser::operator()(const Point& x, double sigma, int condition) const {
  return eval(spec_, x, sigma, condition);
}

Point Denoiser::eval(const PredictorSpec& s, const Point& x, double sigma, int condition) const {
  switch (s.kind) {
    case PredictorKind::kOptimal:
    case PredictorKind::kErrorProne:
      return error_prone_predict(x, sigma, s.delta, index_->all);
    case PredictorKind::kConditional: {
      const int c = s.class_id.value_or(condition);
      if (c < 0 || static_cast<std::size_t>(c) >= index_->by_class.size())
        throw InvalidArgument("conditional predictor has no valid class (got " +
                              std::to_string(c) + ")");
      const PointMatrix& pts = index_->by_class[static_cast<std::size_t>(c)];
      if (pts.rows() == 0)
        throw InvalidArgument("class " + std::to_string(c) + " has no train points");
      return error_prone_predict(x, sigma, s.delta, pts);
    }
    case PredictorKind::kGuided: {
      Point y_p = eval(*s.primary, x, sigma, condition);
      if (s.weight == 0.0) return y_p;
      const Point y_a = eval(*s.auxiliary, x, sigma, condition);
      return y_p + s.weight * (y_p - y_a);
    }
  }
  throw InvalidArgument("unknown predictor kind");
}

Point conditional_predict(const Point& x, double sigma, const PredictorSpec& spec,
                          const PointDataset& ds, const ClassPartition& partition) {
  if (!spec.class_id || *spec.class_id < 0 || *spec.class_id >= partition.k)
    throw InvalidArgument("conditional_predict needs a class id inside the partition");
  const PointDataset labeled = apply_partition(ds, partition);
  const PointMatrix train = labeled.split_points(Split::kTrain);
  const auto labels = labeled.split_labels(Split::kTrain);
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == *spec.class_id) rows.push_back(static_cast<Eigen::Index>(i));
  if (rows.empty()) throw InvalidArgument("conditional class has no train points");
  const PointMatrix subset = train(rows, Eigen::all);
  return error_prone_predict(x, sigma, spec.delta, subset);
}

Point guided_predict(const Point& x, double sigma, const Denoiser& primary,
                     const Denoiser& auxiliary, double weight, int condition) {
  if (!(weight >= 0.0)) throw InvalidArgument("guidance weight must be >= 0");
  Point y_p = primary(x, sigma, condition);
  if (weight == 0.0) return y_p;
  const Point y_a = auxiliary(x, sigma, condition);
  return y_p + weight * (y_p - y_a);
}

DenoiserFn bind(const Denoiser& d, int condition) {
  return [d, condition](const Point& x, double sigma) { return d(x, sigma, condition); };
}

}  // namespace gengap
