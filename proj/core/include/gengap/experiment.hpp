#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "gengap/geometry.hpp"
#include "gengap/metrics.hpp"
#include "gengap/predictor.hpp"

namespace gengap {

enum class ExperimentKind : std::uint8_t {
  kGapCurve,
  kGapGrid,
  kFlowField,
  kDeltaSweep,
  kDensitySweep,
  kGranularitySweep,
  kGuidanceSweep,
  kLadder,
  kTruncationCompare,
  kFdProtocol,
};

std::string_view to_string(ExperimentKind k);
std::optional<ExperimentKind> parse_experiment_kind(std::string_view s);

struct DatasetConfig {
  std::string kind = "circle";  // circle | csv
  CircleMode mode = CircleMode::kSymmetric;
  int n_per_split = 16;
  double radius = 12.0;
  std::uint64_t seed = 0;
  std::string path;
};

struct PartitionConfig {
  int k = 1;
  PartitionMethod method = PartitionMethod::kAngularSector;
  std::uint64_t seed = 0;
};

struct ScheduleConfig {
  double sigma_min = 0.002;
  double sigma_max = 28.0;
  double rho = 7.0;
  int n_steps = 32;
};

struct FeatureConfig {
  std::string kind = "identity";  // identity | random-linear | external
  int out_dim = 8;
  std::uint64_t seed = 0;
  std::string path;
};

struct FdProtocolConfig {
  std::string generated;  // feature files; empty means "use the toy model"
  std::string train;
  std::string val;
  std::size_t n_subsets = 15;
  std::string prior = "match";  // match | uniform
  std::optional<std::size_t> subset_size;
  std::size_t n_generated = 256;
};

struct SweepConfig {
  std::vector<double> delta;
  std::vector<int> n;
  std::vector<int> k;
  std::vector<double> w;
  std::vector<double> sigma;
};

/// Parsed experiment configuration. `source` keeps the JSON document (after
/// CLI overrides) so the manifest can echo it.
struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kGapCurve;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string output;
  DatasetConfig dataset;
  PartitionConfig partition;
  PredictorSpec predictor = PredictorSpec::error_prone(1.2);
  std::optional<PredictorSpec> auxiliary;
  ScheduleConfig schedule;
  std::vector<double> sigmas;  // empty: the schedule's positive levels
  std::optional<double> sigma;
  int noise_draws = 64;
  bool antithetic = true;
  GapDenominator denominator = GapDenominator::kTrain;
  SweepConfig sweep;
  GridSpec grid;
  int replicates = 1;
  std::size_t trajectories = 256;
  FeatureConfig feature;
  FdProtocolConfig fd;
  nlohmann::json source;
};

// Parses the document text; syntax errors carry line:column.
nlohmann::json parse_config_text(std::string_view text);

/// Parses and checks a configuration document. Every problem found is
/// appended to `violations` as "<json pointer>: <message>"; the returned
/// config is only meaningful when no violation was recorded.
ExperimentConfig parse_config(const nlohmann::json& doc, std::vector<std::string>& violations);

// Static feasibility check: parse errors plus partition, schedule and
// subset-plan feasibility. Empty means the config can run.
std::vector<std::string> validate(const nlohmann::json& doc);

struct ManifestEntry {
  std::string path;  // relative to the output directory
  std::string hash;
  std::uintmax_t bytes = 0;
};

struct Manifest {
  std::filesystem::path directory;
  std::vector<ManifestEntry> files;
  nlohmann::json json;
};

/// Runs one experiment and writes its CSV/JSON outputs plus manifest.json into
/// out_dir. Throws ConfigError for invalid configs; numeric failures propagate
/// as NumericDivergence or InvalidCovariance.
Manifest run(const nlohmann::json& doc, const std::filesystem::path& out_dir);

// Output directory: explicit > config "output" > $GENGAP_OUTPUT_ROOT/<kind>-<seed> > runs/<kind>-<seed>.
std::filesystem::path resolve_output_dir(const ExperimentConfig& config,
                                         const std::optional<std::string>& explicit_dir);

}  // namespace gengap
