#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "gengap/geometry.hpp"
#include "gengap/types.hpp"

namespace gengap {

/// Posterior mean of the train points under isotropic Gaussian noise σ:
/// a softmax over −‖x − y_i‖²/(2σ²) applied to the points.
///
/// Exponents are max-shifted. When the best log-weight beats the runner-up by
/// more than 745 (below which exp underflows to zero in double precision) the
/// nearest point is returned directly.
Point posterior_mean(const Point& x, double sigma, const PointMatrix& points);

// (δ²x + σ²·y*(x, σ̃)) / (σ² + δ²) with σ̃² = σ² + δ². δ = 0 is the plain posterior mean.
Point error_prone_predict(const Point& x, double sigma, double delta, const PointMatrix& points);

// Norm of the difference between both sides of
// y_δ(x,σ) − x = σ²/(σ²+δ²)·(y*(x,σ̃) − x).
double decomposition_residual(const Point& x, double sigma, double delta,
                              const PointMatrix& points);

enum class PredictorKind : std::uint8_t { kOptimal, kErrorProne, kConditional, kGuided };

std::string_view to_string(PredictorKind k);
PredictorKind parse_predictor_kind(std::string_view s);

struct PredictorSpec {
  PredictorKind kind = PredictorKind::kOptimal;
  double delta = 0.0;
  // Conditional only. Unset means "use the condition of the sample being
  // denoised", which is how paired reconstruction and per-class sampling work.
  std::optional<int> class_id;
  double weight = 0.0;
  std::shared_ptr<const PredictorSpec> primary;
  std::shared_ptr<const PredictorSpec> auxiliary;

  static PredictorSpec optimal();
  static PredictorSpec error_prone(double delta);
  static PredictorSpec conditional(double delta, std::optional<int> class_id = std::nullopt);
  static PredictorSpec guided(PredictorSpec primary, PredictorSpec auxiliary, double weight);

  // Checks δ ≥ 0, w ≥ 0, presence of guided children and class ids < num_classes.
  void validate(int num_classes) const;
  // True when any node needs a per-sample condition.
  bool needs_condition() const;
};

nlohmann::json to_json(const PredictorSpec& spec);
PredictorSpec predictor_from_json(const nlohmann::json& j);

// Sentinel for "no condition supplied".
inline constexpr int kNoCondition = -1;

/// A PredictorSpec bound to the train split of a dataset, with the train points
/// grouped by class label. Copies share the grouped points.
class Denoiser {
 public:
  Denoiser(PredictorSpec spec, const PointDataset& ds);

  Point operator()(const Point& x, double sigma, int condition = kNoCondition) const;

  const PredictorSpec& spec() const { return spec_; }
  Eigen::Index dim() const;
  const PointMatrix& train_points() const;

 private:
  struct TrainIndex {
    PointMatrix all;
    std::vector<PointMatrix> by_class;
  };

  Point eval(const PredictorSpec& s, const Point& x, double sigma, int condition) const;

  PredictorSpec spec_;
  std::shared_ptr<const TrainIndex> index_;
};

/// Posterior mean (or error-prone prediction) over the train points of one class.
Point conditional_predict(const Point& x, double sigma, const PredictorSpec& spec,
                          const PointDataset& ds, const ClassPartition& partition);

// y_p + w·(y_p − y_aux). w = 0 returns the primary prediction unchanged.
Point guided_predict(const Point& x, double sigma, const Denoiser& primary,
                     const Denoiser& auxiliary, double weight, int condition = kNoCondition);

// Type-erased denoiser D(x, σ) used by the sampler; allows analytic stubs.
using DenoiserFn = std::function<Point(const Point&, double)>;

DenoiserFn bind(const Denoiser& d, int condition = kNoCondition);

}  // namespace gengap
