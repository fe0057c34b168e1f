#include "gengap/sampler.hpp"

#include <cmath>
#include <ostream>
#include <string>

#include "gengap/error.hpp"
#include "gengap/io.hpp"
#include "gengap/parallel.hpp"

namespace gengap {

Point forward_noise(const Point& y, double sigma, NormalSource& noise) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InvalidArgument("sigma must be >= 0");
  if (sigma == 0.0) return y;
  return y + sigma * noise.vector(y.size());
}

Point forward_noise(const Point& y, double sigma, std::uint64_t seed) {
  NormalSource noise(seed);
  return forward_noise(y, sigma, noise);
}

namespace {

void check_finite(const Point& x, double sigma) {
  if (!x.allFinite())
    throw NumericDivergence("sampler state became non-finite at sigma=" + format_double(sigma),
                            sigma);
}

Point initial_state(Eigen::Index dim, double sigma_max, std::uint64_t seed) {
  NormalSource noise(seed);
  return sigma_max * noise.vector(dim);
}

// One Heun step from sigma to next (both > 0).
Point heun_step(const DenoiserFn& denoiser, const Point& x, double sigma, double next) {
  const Point d = (x - denoiser(x, sigma)) / sigma;
  const Point x_euler = x + (next - sigma) * d;
  check_finite(x_euler, next);
  const Point d_next = (x_euler - denoiser(x_euler, next)) / next;
  return x + (next - sigma) * 0.5 * (d + d_next);
}

void check_schedule(const NoiseSchedule& schedule) {
  if (schedule.levels.size() < 3 || schedule.levels.back() != 0.0)
    throw InvalidArgument("schedule must hold at least two positive levels and a terminal 0");
}

}  // namespace

Trajectory heun_sample(const DenoiserFn& denoiser, Eigen::Index dim,
                       const NoiseSchedule& schedule, std::uint64_t seed) {
  check_schedule(schedule);
  const auto& levels = schedule.levels;
  Trajectory traj;
  traj.seed = seed;
  traj.states.reserve(levels.size());

  Point x = initial_state(dim, levels.front(), seed);
  traj.states.push_back({levels.front(), x});
  for (std::size_t i = 0; i + 2 < levels.size(); ++i) {
    x = heun_step(denoiser, x, levels[i], levels[i + 1]);
    check_finite(x, levels[i + 1]);
    traj.states.push_back({levels[i + 1], x});
  }
  // Euler step σ_min → 0 lands exactly on the prediction.
  const double sigma_min = levels[levels.size() - 2];
  x = denoiser(x, sigma_min);
  check_finite(x, 0.0);
  traj.states.push_back({0.0, std::move(x)});
  return traj;
}

Trajectory heun_sample(const Denoiser& denoiser, const NoiseSchedule& schedule,
                       std::uint64_t seed, int condition) {
  return heun_sample(bind(denoiser, condition), denoiser.dim(), schedule, seed);
}

std::size_t snap_to_level(const NoiseSchedule& schedule, double stop_sigma) {
  check_schedule(schedule);
  if (!(stop_sigma > 0.0)) throw InvalidArgument("stop sigma must be positive");
  std::size_t best = 0;
  double best_d = std::abs(schedule.levels[0] - stop_sigma);
  for (std::size_t i = 1; i + 1 < schedule.levels.size(); ++i) {
    const double d = std::abs(schedule.levels[i] - stop_sigma);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

Point truncated_inference(const DenoiserFn& denoiser, Eigen::Index dim,
                          const NoiseSchedule& schedule, std::uint64_t seed, double stop_sigma) {
  const std::size_t stop = snap_to_level(schedule, stop_sigma);
  const auto& levels = schedule.levels;
  Point x = initial_state(dim, levels.front(), seed);
  for (std::size_t i = 0; i < stop; ++i) {
    x = heun_step(denoiser, x, levels[i], levels[i + 1]);
    check_finite(x, levels[i + 1]);
  }
  Point out = denoiser(x, levels[stop]);
  check_finite(out, 0.0);
  return out;
}

Point truncated_inference(const Denoiser& denoiser, const NoiseSchedule& schedule,
                          std::uint64_t seed, double stop_sigma, int condition) {
  return truncated_inference(bind(denoiser, condition), denoiser.dim(), schedule, seed,
                             stop_sigma);
}

int trajectory_condition(const PointDataset& ds, std::size_t i) {
  const auto labels = ds.split_labels(Split::kTrain);
  if (labels.empty()) throw InvalidArgument("dataset has no train points");
  return labels[i % labels.size()];
}

PointMatrix sample_endpoints(const Denoiser& denoiser, const PointDataset& ds,
                             const NoiseSchedule& schedule, std::size_t n, std::uint64_t base_seed,
                             int threads, double stop_sigma) {
  const auto labels = ds.split_labels(Split::kTrain);
  const bool conditioned = denoiser.spec().needs_condition();
  PointMatrix out(static_cast<Eigen::Index>(n), denoiser.dim());
  parallel_for(n, threads, [&](std::size_t i) {
    const int condition = conditioned ? labels[i % labels.size()] : kNoCondition;
    const std::uint64_t seed = base_seed + i;
    const Point p = stop_sigma > 0.0
                        ? truncated_inference(denoiser, schedule, seed, stop_sigma, condition)
                        : heun_sample(denoiser, schedule, seed, condition).endpoint();
    out.row(static_cast<Eigen::Index>(i)) = p.transpose();
  });
  return out;
}

double memorization_check(const Denoiser& denoiser, const NoiseSchedule& schedule, int n_seeds,
                          double tolerance, std::uint64_t base_seed, int threads) {
  if (n_seeds < 1) throw InvalidArgument("memorization check needs at least one seed");
  if (denoiser.spec().needs_condition())
    throw InvalidArgument("memorization check needs an unconditioned predictor");
  const PointMatrix& train = denoiser.train_points();
  std::vector<char> hit(static_cast<std::size_t>(n_seeds), 0);
  parallel_for(hit.size(), threads, [&](std::size_t i) {
    const Point end = heun_sample(denoiser, schedule, base_seed + i).endpoint();
    const double d = std::sqrt((train.rowwise() - end.transpose()).rowwise().squaredNorm().minCoeff());
    hit[i] = d <= tolerance ? 1 : 0;
  });
  std::size_t count = 0;
  for (char h : hit) count += static_cast<std::size_t>(h);
  return static_cast<double>(count) / static_cast<double>(n_seeds);
}

void write_trajectories_csv(std::ostream& out, const std::vector<Trajectory>& trajectories) {
  if (trajectories.empty()) return;
  const Eigen::Index dim = trajectories.front().states.front().x.size();
  out << "seed,step,sigma";
  for (Eigen::Index d = 0; d < dim; ++d) out << ",x" << d;
  out << '\n';
  for (const auto& t : trajectories) {
    for (std::size_t s = 0; s < t.states.size(); ++s) {
      out << t.seed << ',' << s << ',' << format_double(t.states[s].sigma);
      for (Eigen::Index d = 0; d < dim; ++d) out << ',' << format_double(t.states[s].x[d]);
      out << '\n';
    }
  }
}

}  // namespace gengap
