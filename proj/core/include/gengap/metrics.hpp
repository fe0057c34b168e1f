#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include "gengap/geometry.hpp"
#include "gengap/predictor.hpp"
#include "gengap/types.hpp"

namespace gengap {

// D(x, σ, condition). Denoiser converts implicitly; tests plug analytic stubs.
using ConditionalDenoiserFn = std::function<Point(const Point&, double, int)>;

struct NoiseDraws {
  int per_point = 64;
  // Pairs (η, −η); an odd count ends with one unpaired draw.
  bool antithetic = true;
  std::uint64_t seed = 0;
};

/// Noisy-input reconstructions of each point: row i·n + j holds
/// D(y_i + σ·η_ij, σ, condition_i). Point i draws from noise stream i, so train
/// point i and val point i see the same η (common random numbers). An empty
/// `conditions` means no point is conditioned.
PointMatrix reconstruct(const ConditionalDenoiserFn& denoiser, const PointMatrix& points,
                        const std::vector<int>& conditions, double sigma, const NoiseDraws& draws,
                        int threads = 1);

/// Mean over points and draws of ‖y_i − D(y_i + σ·η_ij, σ)‖².
double recon_error(const ConditionalDenoiserFn& denoiser, const PointMatrix& points,
                   const std::vector<int>& conditions, double sigma, const NoiseDraws& draws,
                   int threads = 1);
double recon_error(const Denoiser& denoiser, const PointDataset& ds, Split split, double sigma,
                   const NoiseDraws& draws, int threads = 1);

enum class GapDenominator : std::uint8_t { kTrain, kVal };

GapDenominator parse_denominator(std::string_view s);
std::string_view to_string(GapDenominator d);

struct GapValue {
  double gap = 0.0;
  bool defined = false;
};

// (m_val − m_train) / denominator; undefined when the denominator is not > 0.
GapValue relative_gap(double m_train, double m_val, GapDenominator denominator);

struct GapCurve {
  std::vector<double> sigmas;
  std::vector<double> e_train;
  std::vector<double> e_val;
  std::vector<double> gap;
  std::vector<char> defined;
  GapDenominator denominator = GapDenominator::kTrain;

  // Argmax over defined entries; the first one wins on ties.
  std::optional<std::size_t> peak_index() const;
  double peak_gap() const;
  double peak_sigma() const;
};

GapCurve gap_curve(const Denoiser& denoiser, const PointDataset& ds,
                   const std::vector<double>& sigmas, const NoiseDraws& draws,
                   GapDenominator denominator = GapDenominator::kTrain, int threads = 1);

struct GridSpec {
  double x_min = -15.0;
  double x_max = 15.0;
  double y_min = -15.0;
  double y_max = 15.0;
  int resolution = 200;

  double cell_area() const;
  double x_center(int i) const;
  double y_center(int j) const;
};

struct GapGrid {
  GridSpec grid;
  double sigma = 0.0;
  double e_train = 0.0;
  // resolution² cells, row j (y) major, column i (x) minor.
  std::vector<double> gap;

  double at(int i, int j) const {
    return gap[static_cast<std::size_t>(j) * static_cast<std::size_t>(grid.resolution) +
               static_cast<std::size_t>(i)];
  }
  double area_fraction_at_most(double threshold) const;
  double area_at_most(double threshold) const;
};

/// Relative gap of every grid cell against the train split at one σ, treating
/// the cell center as a one-point validation set. All cells share noise
/// stream 0, which keeps the field smooth between neighboring cells.
GapGrid gap_grid(const Denoiser& denoiser, const PointDataset& ds, double sigma,
                 const GridSpec& grid, const NoiseDraws& draws, int threads = 1);

struct GaussianSummary {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  std::size_t n = 0;
};

// Sample mean and unbiased covariance (n − 1), symmetrized. Needs n ≥ 2.
GaussianSummary fit_gaussian(const PointMatrix& points);

/// ‖μ_a − μ_b‖² + tr(Σ_a + Σ_b − 2(Σ_b^{1/2} Σ_a Σ_b^{1/2})^{1/2}).
///
/// Eigenvalues below −1e-10·trace raise InvalidCovariance; smaller negative
/// ones are clamped to zero. Mean and covariance terms within roundoff of the
/// input scale are reported as exactly 0.
double frechet_distance(const GaussianSummary& a, const GaussianSummary& b);

class FeatureMap {
 public:
  enum class Kind : std::uint8_t { kIdentity, kRandomLinear, kExternal };

  static FeatureMap identity();
  // Fixed Gaussian projection W (out_dim × in_dim), entries N(0, 1/out_dim).
  static FeatureMap random_linear(Eigen::Index in_dim, Eigen::Index out_dim, std::uint64_t seed);
  // Per-point lookup: row r of `features` belongs to row r of ds.points.
  // Applying it to any point not in ds raises InvalidArgument.
  static FeatureMap external(const PointDataset& ds, PointMatrix features);

  Kind kind() const { return kind_; }
  PointMatrix apply(const PointMatrix& points) const;

 private:
  Kind kind_ = Kind::kIdentity;
  Eigen::MatrixXd projection_;
  std::shared_ptr<const std::map<std::vector<double>, Eigen::Index>> lookup_;
  PointMatrix features_;
};

enum class LadderKind : std::uint8_t { kRL2Pix, kRL2Feat, kRFD, kTFD };

LadderKind parse_ladder_kind(std::string_view s);
std::string_view to_string(LadderKind k);

struct LadderResult {
  double m_train = 0.0;
  double m_val = 0.0;
  GapValue gap;
};

struct LadderArgs {
  std::optional<double> sigma;             // rL2_pix, rL2_feat, rFD
  const NoiseSchedule* schedule = nullptr;  // tFD
  NoiseDraws draws;                         // reconstruction metrics
  std::size_t n_trajectories = 256;         // tFD
  GapDenominator denominator = GapDenominator::kTrain;
  int threads = 1;
};

/// One rung of the metric ladder. rL2_pix is the coordinate-space
/// reconstruction error, rL2_feat the same after the feature map, rFD the
/// Fréchet distance between fits of reconstructions and clean split points,
/// and tFD the Fréchet distance between fits of sampler endpoints and the
/// split points.
LadderResult ladder_metric(LadderKind kind, const Denoiser& denoiser, const PointDataset& ds,
                           const FeatureMap& feature, const LadderArgs& args);

struct TruncationRow {
  std::size_t level = 0;
  double sigma = 0.0;
  LadderResult truncated;
  LadderResult forward;
};

/// For each stop level: FD gap of truncated-inference outputs against the
/// splits, next to the rFD gap of forward-noised reconstructions at the same σ.
std::vector<TruncationRow> truncated_gap_comparison(const Denoiser& denoiser,
                                                    const PointDataset& ds,
                                                    const NoiseSchedule& schedule,
                                                    const std::vector<double>& stop_sigmas,
                                                    const FeatureMap& feature,
                                                    const LadderArgs& args);

void write_gap_curve_csv(std::ostream& out, const GapCurve& curve);
void write_gap_grid_csv(std::ostream& out, const GapGrid& grid);

}  // namespace gengap
