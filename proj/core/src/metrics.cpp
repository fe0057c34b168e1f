#include "gengap/metrics.hpp"

#include <cmath>
#include <ostream>
#include <string>

#include <Eigen/Eigenvalues>

#include "gengap/error.hpp"
#include "gengap/io.hpp"
#include "gengap/parallel.hpp"
#include "gengap/rng.hpp"
#include "gengap/sampler.hpp"

namespace gengap {

namespace {

// η for draw j of one noise stream, honoring antithetic pairing.
std::vector<Point> noise_block(Eigen::Index dim, std::uint64_t stream, const NoiseDraws& draws) {
  NormalSource noise(draws.seed, stream);
  std::vector<Point> out;
  out.reserve(static_cast<std::size_t>(draws.per_point));
  for (int j = 0; j < draws.per_point; ++j) {
    if (draws.antithetic && j % 2 == 1)
      out.push_back(-out.back());
    else
      out.push_back(noise.vector(dim));
  }
  return out;
}

void check_draws(const NoiseDraws& draws) {
  if (draws.per_point < 1) throw InvalidArgument("need at least one noise draw per point");
}

// Mean of ‖y_i − r_ij‖² with r_ij at row i·n + j. Fixed summation order.
double mean_sq_error(const PointMatrix& clean, const PointMatrix& recon, int per_point) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < clean.rows(); ++i) {
    double point_sum = 0.0;
    for (int j = 0; j < per_point; ++j)
      point_sum += (recon.row(i * per_point + j) - clean.row(i)).squaredNorm();
    total += point_sum;
  }
  return total / (static_cast<double>(clean.rows()) * per_point);
}

std::vector<int> conditions_for(const Denoiser& denoiser, const PointDataset& ds, Split split) {
  if (denoiser.spec().needs_condition()) return ds.split_labels(split);
  return std::vector<int>(ds.count(split), kNoCondition);
}

PointMatrix split_or_throw(const PointDataset& ds, Split split) {
  PointMatrix pts = ds.split_points(split);
  if (pts.rows() == 0)
    throw InvalidArgument("split '" + std::string(to_string(split)) + "' is empty");
  return pts;
}

}  // namespace

PointMatrix reconstruct(const ConditionalDenoiserFn& denoiser, const PointMatrix& points,
                        const std::vector<int>& conditions, double sigma, const NoiseDraws& draws,
                        int threads) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidArgument("sigma must be positive");
  if (points.rows() == 0) throw InvalidArgument("cannot reconstruct an empty point set");
  if (!conditions.empty() && conditions.size() != static_cast<std::size_t>(points.rows()))
    throw InvalidArgument("one condition per point is required");
  check_draws(draws);

  const int n = draws.per_point;
  PointMatrix out(points.rows() * n, points.cols());
  parallel_for(static_cast<std::size_t>(points.rows()), threads, [&](std::size_t i) {
    const auto r = static_cast<Eigen::Index>(i);
    const Point y = points.row(r).transpose();
    const auto etas = noise_block(points.cols(), i, draws);
    for (int j = 0; j < n; ++j)
      out.row(r * n + j) = denoiser(y + sigma * etas[static_cast<std::size_t>(j)], sigma,
                                    conditions.empty() ? kNoCondition : conditions[i])
                               .transpose();
  });
  return out;
}

double recon_error(const ConditionalDenoiserFn& denoiser, const PointMatrix& points,
                   const std::vector<int>& conditions, double sigma, const NoiseDraws& draws,
                   int threads) {
  const PointMatrix recon = reconstruct(denoiser, points, conditions, sigma, draws, threads);
  return mean_sq_error(points, recon, draws.per_point);
}

double recon_error(const Denoiser& denoiser, const PointDataset& ds, Split split, double sigma,
                   const NoiseDraws& draws, int threads) {
  return recon_error(denoiser, split_or_throw(ds, split), conditions_for(denoiser, ds, split),
                     sigma, draws, threads);
}

GapDenominator parse_denominator(std::string_view s) {
  if (s == "train") return GapDenominator::kTrain;
  if (s == "val") return GapDenominator::kVal;
  throw InvalidArgument("unknown gap denominator '" + std::string(s) + "'");
}

std::string_view to_string(GapDenominator d) {
  return d == GapDenominator::kTrain ? "train" : "val";
}

GapValue relative_gap(double m_train, double m_val, GapDenominator denominator) {
  const double denom = denominator == GapDenominator::kTrain ? m_train : m_val;
  if (!(denom > 0.0)) return {0.0, false};
  return {(m_val - m_train) / denom, true};
}

std::optional<std::size_t> GapCurve::peak_index() const {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < gap.size(); ++i)
    if (defined[i] && (!best || gap[i] > gap[*best])) best = i;
  return best;
}

double GapCurve::peak_gap() const {
  const auto i = peak_index();
  if (!i) throw InvalidArgument("gap curve has no defined entry");
  return gap[*i];
}

double GapCurve::peak_sigma() const {
  const auto i = peak_index();
  if (!i) throw InvalidArgument("gap curve has no defined entry");
  return sigmas[*i];
}

GapCurve gap_curve(const Denoiser& denoiser, const PointDataset& ds,
                   const std::vector<double>& sigmas, const NoiseDraws& draws,
                   GapDenominator denominator, int threads) {
  if (sigmas.empty()) throw InvalidArgument("gap curve needs at least one sigma");
  GapCurve c;
  c.denominator = denominator;
  c.sigmas = sigmas;
  const std::size_t n = sigmas.size();
  c.e_train.resize(n);
  c.e_val.resize(n);
  c.gap.resize(n);
  c.defined.resize(n);

  const PointMatrix train = split_or_throw(ds, Split::kTrain);
  const PointMatrix val = split_or_throw(ds, Split::kVal);
  const auto train_cond = conditions_for(denoiser, ds, Split::kTrain);
  const auto val_cond = conditions_for(denoiser, ds, Split::kVal);
  parallel_for(n, threads, [&](std::size_t i) {
    c.e_train[i] = recon_error(denoiser, train, train_cond, sigmas[i], draws);
    c.e_val[i] = recon_error(denoiser, val, val_cond, sigmas[i], draws);
    const GapValue g = relative_gap(c.e_train[i], c.e_val[i], denominator);
    c.gap[i] = g.gap;
    c.defined[i] = g.defined ? 1 : 0;
  });
  return c;
}

double GridSpec::cell_area() const {
  return (x_max - x_min) / resolution * ((y_max - y_min) / resolution);
}

double GridSpec::x_center(int i) const { return x_min + (x_max - x_min) * (i + 0.5) / resolution; }
double GridSpec::y_center(int j) const { return y_min + (y_max - y_min) * (j + 0.5) / resolution; }

double GapGrid::area_fraction_at_most(double threshold) const {
  std::size_t count = 0;
  for (double g : gap)
    if (g <= threshold) ++count;
  return static_cast<double>(count) / static_cast<double>(gap.size());
}

double GapGrid::area_at_most(double threshold) const {
  return area_fraction_at_most(threshold) * (grid.x_max - grid.x_min) * (grid.y_max - grid.y_min);
}

GapGrid gap_grid(const Denoiser& denoiser, const PointDataset& ds, double sigma,
                 const GridSpec& grid, const NoiseDraws& draws, int threads) {
  if (ds.dim() != 2) throw InvalidArgument("gap grid is defined for 2-D datasets");
  if (grid.resolution < 1 || !(grid.x_max > grid.x_min) || !(grid.y_max > grid.y_min))
    throw InvalidArgument("invalid grid bounds or resolution");
  if (denoiser.spec().needs_condition())
    throw InvalidArgument("gap grid needs a predictor with a fixed condition");

  GapGrid out;
  out.grid = grid;
  out.sigma = sigma;
  out.e_train = recon_error(denoiser, ds, Split::kTrain, sigma, draws, threads);
  if (!(out.e_train > 0.0)) throw InvalidArgument("train reconstruction error is zero");

  const auto etas = noise_block(2, 0, draws);
  const auto res = static_cast<std::size_t>(grid.resolution);
  out.gap.resize(res * res);
  parallel_for(res, threads, [&](std::size_t j) {
    for (std::size_t i = 0; i < res; ++i) {
      Point c(2);
      c << grid.x_center(static_cast<int>(i)), grid.y_center(static_cast<int>(j));
      double sum = 0.0;
      for (const auto& eta : etas) sum += (denoiser(c + sigma * eta, sigma) - c).squaredNorm();
      const double e_cell = sum / static_cast<double>(etas.size());
      out.gap[j * res + i] = (e_cell - out.e_train) / out.e_train;
    }
  });
  return out;
}

GaussianSummary fit_gaussian(const PointMatrix& points) {
  if (points.rows() < 2) throw InvalidArgument("Gaussian fit needs at least 2 points");
  GaussianSummary g;
  g.n = static_cast<std::size_t>(points.rows());
  g.mean = points.colwise().mean().transpose();
  const Eigen::MatrixXd centered = points.rowwise() - g.mean.transpose();
  Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(points.rows() - 1);
  g.cov = 0.5 * (cov + cov.transpose());
  return g;
}

namespace {

// Eigenvalues of a symmetric PSD matrix, clamped at 0 within tolerance.
Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> psd_eigen(const Eigen::MatrixXd& m,
                                                         std::string_view what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
  if (solver.info() != Eigen::Success)
    throw InvalidCovariance(std::string(what) + ": eigendecomposition failed");
  const double tol = 1e-10 * std::abs(m.trace());
  if (solver.eigenvalues().minCoeff() < -tol)
    throw InvalidCovariance(std::string(what) + " is not positive semidefinite (eigenvalue " +
                            format_double(solver.eigenvalues().minCoeff()) + ")");
  return solver;
}

}  // namespace

double frechet_distance(const GaussianSummary& a, const GaussianSummary& b) {
  const auto d = a.mean.size();
  if (b.mean.size() != d || a.cov.rows() != d || a.cov.cols() != d || b.cov.rows() != d ||
      b.cov.cols() != d)
    throw InvalidArgument("Gaussian summaries differ in dimension");
  if (!a.cov.allFinite() || !b.cov.allFinite() || !a.mean.allFinite() || !b.mean.allFinite())
    throw InvalidCovariance("Gaussian summary has non-finite entries");

  psd_eigen(a.cov, "first covariance");
  const auto eb = psd_eigen(b.cov, "second covariance");
  const Eigen::VectorXd sqrt_lb = eb.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd sqrt_b = eb.eigenvectors() * sqrt_lb.asDiagonal() * eb.eigenvectors().transpose();

  Eigen::MatrixXd inner = sqrt_b * a.cov * sqrt_b;
  inner = 0.5 * (inner + inner.transpose());
  const auto ei = psd_eigen(inner, "covariance product");
  const double tr_sqrt = ei.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

  // Both terms cancel to roundoff for matching inputs; anything under 1e-12
  // of the input scale (squared for the means) is exactly 0.
  const double scale = a.cov.trace() + b.cov.trace();
  double cov_term = scale - 2.0 * tr_sqrt;
  if (cov_term <= 1e-12 * scale) cov_term = 0.0;
  double mean_term = (a.mean - b.mean).squaredNorm();
  if (mean_term <= 1e-24 * (a.mean.squaredNorm() + b.mean.squaredNorm() + scale)) mean_term = 0.0;
  return mean_term + cov_term;
}

FeatureMap FeatureMap::identity() { return {}; }

FeatureMap FeatureMap::random_linear(Eigen::Index in_dim, Eigen::Index out_dim,
                                     std::uint64_t seed) {
  if (in_dim < 1 || out_dim < 1) throw InvalidArgument("feature dimensions must be positive");
  FeatureMap f;
  f.kind_ = Kind::kRandomLinear;
  NormalSource noise(seed);
  f.projection_.resize(out_dim, in_dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(out_dim));
  for (Eigen::Index r = 0; r < out_dim; ++r)
    for (Eigen::Index c = 0; c < in_dim; ++c) f.projection_(r, c) = scale * noise.next();
  return f;
}

FeatureMap FeatureMap::external(const PointDataset& ds, PointMatrix features) {
  if (static_cast<std::size_t>(features.rows()) != ds.size())
    throw InvalidArgument("external features must have one row per dataset point");
  if (!features.allFinite()) throw InvalidArgument("external features contain non-finite values");
  FeatureMap f;
  f.kind_ = Kind::kExternal;
  auto lookup = std::make_shared<std::map<std::vector<double>, Eigen::Index>>();
  for (Eigen::Index r = 0; r < ds.points.rows(); ++r) {
    std::vector<double> key(ds.points.row(r).begin(), ds.points.row(r).end());
    lookup->emplace(std::move(key), r);
  }
  f.lookup_ = std::move(lookup);
  f.features_ = std::move(features);
  return f;
}

PointMatrix FeatureMap::apply(const PointMatrix& points) const {
  switch (kind_) {
    case Kind::kIdentity:
      return points;
    case Kind::kRandomLinear:
      if (points.cols() != projection_.cols())
        throw InvalidArgument("random feature map expects dimension " +
                              std::to_string(projection_.cols()));
      return points * projection_.transpose();
    case Kind::kExternal: {
      PointMatrix out(points.rows(), features_.cols());
      for (Eigen::Index r = 0; r < points.rows(); ++r) {
        std::vector<double> key(points.row(r).begin(), points.row(r).end());
        const auto it = lookup_->find(key);
        if (it == lookup_->end())
          throw InvalidArgument("external feature map is undefined for points outside the dataset");
        out.row(r) = features_.row(it->second);
      }
      return out;
    }
  }
  return points;
}

LadderKind parse_ladder_kind(std::string_view s) {
  if (s == "rL2_pix") return LadderKind::kRL2Pix;
  if (s == "rL2_feat") return LadderKind::kRL2Feat;
  if (s == "rFD") return LadderKind::kRFD;
  if (s == "tFD") return LadderKind::kTFD;
  throw InvalidArgument("unknown ladder metric '" + std::string(s) + "'");
}

std::string_view to_string(LadderKind k) {
  switch (k) {
    case LadderKind::kRL2Pix: return "rL2_pix";
    case LadderKind::kRL2Feat: return "rL2_feat";
    case LadderKind::kRFD: return "rFD";
    case LadderKind::kTFD: return "tFD";
  }
  return "?";
}

namespace {

double fd_between(const FeatureMap& feature, const PointMatrix& generated, const PointMatrix& ref) {
  return frechet_distance(fit_gaussian(feature.apply(generated)), fit_gaussian(feature.apply(ref)));
}

LadderResult fd_against_splits(const FeatureMap& feature, const PointMatrix& generated,
                               const PointDataset& ds, GapDenominator denominator) {
  LadderResult r;
  r.m_train = fd_between(feature, generated, split_or_throw(ds, Split::kTrain));
  r.m_val = fd_between(feature, generated, split_or_throw(ds, Split::kVal));
  r.gap = relative_gap(r.m_train, r.m_val, denominator);
  return r;
}

}  // namespace

LadderResult ladder_metric(LadderKind kind, const Denoiser& denoiser, const PointDataset& ds,
                           const FeatureMap& feature, const LadderArgs& args) {
  if (kind == LadderKind::kTFD) {
    if (!args.schedule) throw InvalidArgument("tFD needs a noise schedule");
    if (args.n_trajectories < 2) throw InvalidArgument("tFD needs at least 2 trajectories");
    const PointMatrix generated = sample_endpoints(denoiser, ds, *args.schedule,
                                                   args.n_trajectories, args.draws.seed,
                                                   args.threads);
    return fd_against_splits(feature, generated, ds, args.denominator);
  }

  if (!args.sigma) throw InvalidArgument(std::string(to_string(kind)) + " needs sigma");
  const double sigma = *args.sigma;
  LadderResult r;
  double* slot[2] = {&r.m_train, &r.m_val};
  for (Split split : {Split::kTrain, Split::kVal}) {
    const PointMatrix clean = split_or_throw(ds, split);
    const PointMatrix recon = reconstruct(denoiser, clean, conditions_for(denoiser, ds, split),
                                          sigma, args.draws, args.threads);
    double& m = *slot[split == Split::kTrain ? 0 : 1];
    switch (kind) {
      case LadderKind::kRL2Pix:
        m = mean_sq_error(clean, recon, args.draws.per_point);
        break;
      case LadderKind::kRL2Feat:
        m = mean_sq_error(feature.apply(clean), feature.apply(recon), args.draws.per_point);
        break;
      case LadderKind::kRFD: {
        // Clean rows repeated per draw, so both fits share the sample count.
        const auto n = static_cast<Eigen::Index>(args.draws.per_point);
        PointMatrix repeated(recon.rows(), clean.cols());
        for (Eigen::Index i = 0; i < recon.rows(); ++i) repeated.row(i) = clean.row(i / n);
        m = fd_between(feature, recon, repeated);
        break;
      }
      case LadderKind::kTFD:
        break;
    }
  }
  r.gap = relative_gap(r.m_train, r.m_val, args.denominator);
  return r;
}

std::vector<TruncationRow> truncated_gap_comparison(const Denoiser& denoiser,
                                                    const PointDataset& ds,
                                                    const NoiseSchedule& schedule,
                                                    const std::vector<double>& stop_sigmas,
                                                    const FeatureMap& feature,
                                                    const LadderArgs& args) {
  if (stop_sigmas.empty()) throw InvalidArgument("truncation study needs stop levels");
  std::vector<TruncationRow> rows;
  rows.reserve(stop_sigmas.size());
  for (double stop : stop_sigmas) {
    TruncationRow row;
    row.level = snap_to_level(schedule, stop);
    row.sigma = schedule.levels[row.level];
    const PointMatrix generated = sample_endpoints(denoiser, ds, schedule, args.n_trajectories,
                                                   args.draws.seed, args.threads, row.sigma);
    row.truncated = fd_against_splits(feature, generated, ds, args.denominator);
    LadderArgs fwd = args;
    fwd.sigma = row.sigma;
    row.forward = ladder_metric(LadderKind::kRFD, denoiser, ds, feature, fwd);
    rows.push_back(row);
  }
  return rows;
}

void write_gap_curve_csv(std::ostream& out, const GapCurve& curve) {
  out << "sigma,e_train,e_val,gap,defined\n";
  for (std::size_t i = 0; i < curve.sigmas.size(); ++i)
    out << format_double(curve.sigmas[i]) << ',' << format_double(curve.e_train[i]) << ','
        << format_double(curve.e_val[i]) << ','
        << (curve.defined[i] ? format_double(curve.gap[i]) : std::string("nan")) << ','
        << (curve.defined[i] ? 1 : 0) << '\n';
}

void write_gap_grid_csv(std::ostream& out, const GapGrid& grid) {
  out << "x,y,gap\n";
  for (int j = 0; j < grid.grid.resolution; ++j)
    for (int i = 0; i < grid.grid.resolution; ++i)
      out << format_double(grid.grid.x_center(i)) << ',' << format_double(grid.grid.y_center(j))
          << ',' << format_double(grid.at(i, j)) << '\n';
}

}  // namespace gengap
