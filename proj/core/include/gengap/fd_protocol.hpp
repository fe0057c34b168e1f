#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "gengap/geometry.hpp"
#include "gengap/metrics.hpp"
#include "gengap/types.hpp"

namespace gengap {

enum class FeatureOrigin : std::uint8_t { kToy, kExternalFile };

// Feature vectors with optional per-row class labels. `id` is a content hash
// of vectors and labels.
struct FeatureSet {
  PointMatrix vectors;
  std::vector<int> labels;  // empty when unlabeled
  FeatureOrigin origin = FeatureOrigin::kToy;
  std::string id;

  // Validates (finite entries, labels contiguous from 0) and fills `id`.
  static FeatureSet make(PointMatrix vectors, std::vector<int> labels,
                         FeatureOrigin origin = FeatureOrigin::kToy);

  bool labeled() const { return !labels.empty(); }
  std::size_t size() const { return static_cast<std::size_t>(vectors.rows()); }
  Eigen::Index dim() const { return vectors.cols(); }
};

// Features of one dataset split, labels taken from the dataset.
FeatureSet feature_set_from_split(const PointDataset& ds, Split split,
                                  const FeatureMap& feature = FeatureMap::identity());

using ClassPrior = std::map<int, std::size_t>;

// Exact per-class counts of a labeled set.
ClassPrior match_prior(const FeatureSet& reference);

// Counts from drawing a class uniformly at random for each of subset_size items.
ClassPrior uniform_prior(int num_classes, std::size_t subset_size, std::uint64_t seed);

struct SubsetPlan {
  std::size_t n_subsets = 1;
  std::size_t subset_size = 0;
  ClassPrior class_prior;
  std::uint64_t seed = 0;

  // Plan whose subset size is the prior's total.
  static SubsetPlan from_prior(ClassPrior prior, std::size_t n_subsets, std::uint64_t seed);
  void validate() const;
};

// Checks every class count against the pool; throws InfeasiblePlan naming the
// first short class.
void check_feasible(const FeatureSet& pool, const SubsetPlan& plan);

/// Row indices into the pool for each subset. Each subset is drawn without
/// replacement, class by class in ascending id order; different subsets are
/// independent and may overlap.
std::vector<std::vector<std::size_t>> draw_subset_indices(const FeatureSet& pool,
                                                          const SubsetPlan& plan);
std::vector<FeatureSet> draw_subsets(const FeatureSet& pool, const SubsetPlan& plan);

struct ProtocolResult {
  double mean = 0.0;
  std::vector<double> per_reference;
};

// FD of the generated set against each reference, and their arithmetic mean.
ProtocolResult protocol_fd(const FeatureSet& generated, const std::vector<FeatureSet>& references);

struct ClampedPlan {
  SubsetPlan plan;
  std::optional<std::string> warning;
};

// Shrinks the subset size to reference_size when the reference is smaller,
// rescaling the prior by largest remainder (ties to the lower class id).
ClampedPlan clamp_to_reference(const SubsetPlan& plan, std::size_t reference_size);

struct MismatchResult {
  double train_vs_train = 0.0;
  double train_vs_val = 0.0;
  SubsetPlan plan;  // after clamping
  std::vector<std::string> warnings;
};

/// Mean pairwise FD among train subsets (the limited-sample floor) and mean FD
/// of each train subset against the validation set (split mismatch plus
/// floor). Needs at least two subsets.
MismatchResult baseline_mismatch(const FeatureSet& train_pool, const FeatureSet& val_set,
                                 const SubsetPlan& plan);

// Binary feature file: "FGL1", u32 n, u32 d, u32 label_flag, n·d float32
// row-major, then n u32 labels when label_flag = 1. Little-endian throughout.
void write_feature_file(std::ostream& out, const FeatureSet& set);
FeatureSet read_feature_file(std::istream& in);
// Accepts the binary format or the dataset CSV layout (x0..,label,split).
FeatureSet load_feature_set(const std::filesystem::path& path);

nlohmann::json to_json(const SubsetPlan& plan);
nlohmann::json protocol_report(const ProtocolResult& result, const SubsetPlan& plan,
                               const FeatureSet& generated,
                               const std::vector<FeatureSet>& references);

}  // namespace gengap
