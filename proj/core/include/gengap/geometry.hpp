#pragma once

#include <cstdint>
#include <iosfwd>
#include <string_view>
#include <vector>

#include "gengap/types.hpp"

namespace gengap {

enum class Split : std::uint8_t { kTrain, kVal };

std::string_view to_string(Split s);
Split parse_split(std::string_view s);

// Labeled points with a train/validation split. Rows are ordered train block
// first, then validation block.
struct PointDataset {
  PointMatrix points;
  std::vector<int> labels;
  std::vector<Split> split;
  std::uint64_t seed = 0;
  // When set, every class must appear in both splits once k > 1.
  bool paired = false;

  Eigen::Index dim() const { return points.cols(); }
  std::size_t size() const { return static_cast<std::size_t>(points.rows()); }
  std::size_t count(Split s) const;
  std::vector<std::size_t> indices(Split s) const;
  PointMatrix split_points(Split s) const;
  std::vector<int> split_labels(Split s) const;
  int num_classes() const;

  // Throws InvalidArgument on shape mismatches or non-finite coordinates.
  void validate() const;
};

enum class CircleMode : std::uint8_t { kSymmetric, kRandom };

CircleMode parse_circle_mode(std::string_view s);

/// Builds 2·n_per_split points on a circle of the given radius.
///
/// Symmetric mode puts train points at 2πi/n and validation points halfway
/// between them. Random mode draws all angles uniformly and alternates the
/// split along the sorted angles, so the two splits still interleave.
PointDataset make_circle_dataset(int n_per_split, double radius, CircleMode mode,
                                 std::uint64_t seed);

// Wraps arbitrary train/val clouds into a dataset with all labels 0.
PointDataset make_point_cloud_dataset(const PointMatrix& train, const PointMatrix& val);

struct NoiseSchedule {
  double sigma_min = 0.002;
  double sigma_max = 28.0;
  double rho = 7.0;
  int n_steps = 32;
  // n_steps descending levels followed by a terminal 0.
  std::vector<double> levels;

  // Levels without the terminal zero.
  std::vector<double> positive_levels() const {
    return {levels.begin(), levels.end() - 1};
  }
};

/// EDM ρ-schedule: σ_i = (σ_max^{1/ρ} + i/(n−1)·(σ_min^{1/ρ} − σ_max^{1/ρ}))^ρ, then 0.
NoiseSchedule make_schedule(double sigma_min, double sigma_max, double rho, int n_steps);

enum class PartitionMethod : std::uint8_t { kAngularSector, kKMeans };

PartitionMethod parse_partition_method(std::string_view s);
std::string_view to_string(PartitionMethod m);

struct ClassPartition {
  int k = 1;
  // One class id per dataset row.
  std::vector<int> assignment;
  PartitionMethod method = PartitionMethod::kAngularSector;
};

/// Assigns every dataset point to one of k classes.
///
/// Angular sectors slice [0, 2π) of the first two coordinates into k equal
/// arcs starting at angle 0. k-means runs Lloyd iterations on the train
/// points, starting from k train points picked by a seeded shuffle; ties go to
/// the lowest class id and an emptied cluster is re-seeded at the train point
/// farthest from its centroid. Validation points join the nearest centroid.
/// Throws DegeneratePartition when a class ends up with no train point.
ClassPartition partition_classes(const PointDataset& ds, int k, PartitionMethod method,
                                 std::uint64_t seed);

// Copy of ds relabeled by the partition. Paired datasets additionally need
// every class present on the validation split.
PointDataset apply_partition(const PointDataset& ds, const ClassPartition& partition);

void write_dataset_csv(std::ostream& out, const PointDataset& ds);
PointDataset read_dataset_csv(std::istream& in);

}  // namespace gengap
