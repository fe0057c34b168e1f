#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "gengap/geometry.hpp"
#include "gengap/predictor.hpp"
#include "gengap/rng.hpp"

namespace gengap {

// y + σ·η with η drawn from the given source.
Point forward_noise(const Point& y, double sigma, NormalSource& noise);
// Same, with η drawn from a fresh source seeded by `seed`.
Point forward_noise(const Point& y, double sigma, std::uint64_t seed);

struct TrajectoryState {
  double sigma;
  Point x;
};

struct Trajectory {
  std::uint64_t seed = 0;
  // From σ_max down to exactly 0.
  std::vector<TrajectoryState> states;

  const Point& endpoint() const { return states.back().x; }
};

/// Integrates the probability-flow ODE dx/dσ = (x − D(x,σ))/σ along the
/// schedule. Starts at σ_max·η (η standard normal from `seed`), takes Heun
/// steps between positive levels and a final Euler step from σ_min to 0, so
/// the endpoint equals D(x, σ_min). Throws NumericDivergence on a non-finite
/// state.
Trajectory heun_sample(const DenoiserFn& denoiser, Eigen::Index dim,
                       const NoiseSchedule& schedule, std::uint64_t seed);
Trajectory heun_sample(const Denoiser& denoiser, const NoiseSchedule& schedule,
                       std::uint64_t seed, int condition = kNoCondition);

// Index of the positive level closest to stop_sigma; ties go to the larger σ.
std::size_t snap_to_level(const NoiseSchedule& schedule, double stop_sigma);

/// Runs the sampler down to the snapped stop level and then jumps straight
/// to σ = 0 with a single prediction D(x, σ_stop).
Point truncated_inference(const DenoiserFn& denoiser, Eigen::Index dim,
                          const NoiseSchedule& schedule, std::uint64_t seed, double stop_sigma);
Point truncated_inference(const Denoiser& denoiser, const NoiseSchedule& schedule,
                          std::uint64_t seed, double stop_sigma, int condition = kNoCondition);

// Condition used for trajectory i when the predictor is conditional: the
// train labels are cycled so generated classes follow the train prior.
int trajectory_condition(const PointDataset& ds, std::size_t i);

// Endpoints (or truncated outputs when stop_sigma > 0) of trajectories
// seeded base_seed, base_seed+1, ...; one row per trajectory.
PointMatrix sample_endpoints(const Denoiser& denoiser, const PointDataset& ds,
                             const NoiseSchedule& schedule, std::size_t n, std::uint64_t base_seed,
                             int threads = 1, double stop_sigma = 0.0);

// Fraction of n_seeds trajectories ending within `tolerance` of a train point.
double memorization_check(const Denoiser& denoiser, const NoiseSchedule& schedule, int n_seeds,
                          double tolerance, std::uint64_t base_seed = 0, int threads = 1);

// Rows: seed,step,sigma,x0..x{d-1}.
void write_trajectories_csv(std::ostream& out, const std::vector<Trajectory>& trajectories);

}  // namespace gengap
