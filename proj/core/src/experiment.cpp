#include "gengap/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "gengap/error.hpp"
#include "gengap/fd_protocol.hpp"
#include "gengap/io.hpp"
#include "gengap/sampler.hpp"

namespace gengap {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<std::pair<ExperimentKind, std::string_view>, 10> kKinds = {{
    {ExperimentKind::kGapCurve, "gap-curve"},
    {ExperimentKind::kGapGrid, "gap-grid"},
    {ExperimentKind::kFlowField, "flow-field"},
    {ExperimentKind::kDeltaSweep, "delta-sweep"},
    {ExperimentKind::kDensitySweep, "density-sweep"},
    {ExperimentKind::kGranularitySweep, "granularity-sweep"},
    {ExperimentKind::kGuidanceSweep, "guidance-sweep"},
    {ExperimentKind::kLadder, "ladder"},
    {ExperimentKind::kTruncationCompare, "truncation-compare"},
    {ExperimentKind::kFdProtocol, "fd-protocol"},
}};

// Field access with JSON-pointer error reporting. Type errors are recorded
// and the default is kept, so one pass reports every problem.
class Reader {
 public:
  Reader(const json& node, std::string path, std::vector<std::string>& errors)
      : node_(node), path_(std::move(path)), errors_(errors) {}

  bool has(const char* key) const { return node_.contains(key) && !node_[key].is_null(); }
  std::string at(const char* key) const { return path_ + "/" + key; }
  void error(const std::string& where, const std::string& what) const {
    errors_.push_back(where + ": " + what);
  }

  template <class T>
  void read(const char* key, T& out) const {
    if (!has(key)) return;
    try {
      out = node_[key].get<T>();
    } catch (const json::exception& e) {
      error(at(key), std::string("wrong type (") + node_[key].type_name() + ")");
    }
  }

  Reader child(const char* key) const {
    static const json kEmpty = json::object();
    if (!has(key)) return {kEmpty, at(key), errors_};
    if (!node_[key].is_object()) {
      error(at(key), "must be an object");
      return {kEmpty, at(key), errors_};
    }
    return {node_[key], at(key), errors_};
  }

  void only(std::initializer_list<const char*> allowed) const {
    if (!node_.is_object()) return;
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : node_.items())
      if (!ok.count(k)) error(path_ + "/" + k, "unknown field");
  }

  const json& node() const { return node_; }

 private:
  const json& node_;
  std::string path_;
  std::vector<std::string>& errors_;
};

template <class Fn>
void guarded(std::vector<std::string>& errors, const std::string& where, Fn&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    errors.push_back(where + ": " + e.what());
  }
}

PointDataset build_dataset(const DatasetConfig& c, int n_override = 0) {
  if (c.kind == "csv") {
    std::ifstream in(c.path);
    if (!in) throw InvalidArgument("cannot open dataset " + c.path);
    return read_dataset_csv(in);
  }
  return make_circle_dataset(n_override > 0 ? n_override : c.n_per_split, c.radius, c.mode, c.seed);
}

PointDataset build_labeled(const ExperimentConfig& c, int k, int n_override = 0) {
  PointDataset ds = build_dataset(c.dataset, n_override);
  if (k <= 1 && c.dataset.kind == "csv") return ds;
  const ClassPartition p = partition_classes(ds, std::max(k, 1), c.partition.method, c.partition.seed);
  return apply_partition(ds, p);
}

NoiseSchedule build_schedule(const ScheduleConfig& s) {
  return make_schedule(s.sigma_min, s.sigma_max, s.rho, s.n_steps);
}

std::vector<double> sigma_grid(const ExperimentConfig& c) {
  return c.sigmas.empty() ? build_schedule(c.schedule).positive_levels() : c.sigmas;
}

NoiseDraws draws_for(const ExperimentConfig& c, int replicate) {
  return {c.noise_draws, c.antithetic, c.seed + static_cast<std::uint64_t>(replicate)};
}

FeatureMap build_feature(const ExperimentConfig& c, const PointDataset& ds) {
  if (c.feature.kind == "identity") return FeatureMap::identity();
  if (c.feature.kind == "random-linear")
    return FeatureMap::random_linear(ds.dim(), c.feature.out_dim, c.feature.seed);
  const FeatureSet f = load_feature_set(c.feature.path);
  return FeatureMap::external(ds, f.vectors);
}

struct FdInputs {
  FeatureSet generated, train, val;
};

// Feature sets for the protocol: the files when given, else the toy model's
// sampler endpoints and dataset splits.
FdInputs fd_inputs(const ExperimentConfig& c, bool with_generated) {
  FdInputs in;
  if (!c.fd.train.empty()) {
    in.train = load_feature_set(c.fd.train);
    in.val = load_feature_set(c.fd.val);
    if (with_generated) in.generated = load_feature_set(c.fd.generated);
    return in;
  }
  const PointDataset ds = build_labeled(c, c.partition.k);
  const FeatureMap feature = build_feature(c, ds);
  in.train = feature_set_from_split(ds, Split::kTrain, feature);
  in.val = feature_set_from_split(ds, Split::kVal, feature);
  if (with_generated) {
    const Denoiser d(c.predictor, ds);
    const PointMatrix gen =
        sample_endpoints(d, ds, build_schedule(c.schedule), c.fd.n_generated, c.seed, c.threads);
    in.generated = FeatureSet::make(feature.apply(gen), {});
  }
  return in;
}

// Subset plan against the validation set. A requested size above the
// validation size is clamped to it with a warning.
SubsetPlan fd_plan(const ExperimentConfig& c, const FeatureSet& val,
                   std::vector<std::string>& warnings) {
  const std::size_t requested = c.fd.subset_size.value_or(val.size());
  const std::size_t size = std::min(requested, val.size());
  if (requested > val.size())
    warnings.push_back("subset size clamped from " + std::to_string(requested) + " to " +
                       std::to_string(val.size()) + " to match the validation set");
  const ClassPrior reference = match_prior(val);
  if (c.fd.prior == "uniform")
    return SubsetPlan::from_prior(uniform_prior(static_cast<int>(reference.size()), size, c.seed),
                                  c.fd.n_subsets, c.seed);
  return clamp_to_reference(SubsetPlan::from_prior(reference, c.fd.n_subsets, c.seed), size).plan;
}

}  // namespace

std::string_view to_string(ExperimentKind k) {
  for (const auto& [kind, name] : kKinds)
    if (kind == k) return name;
  return "?";
}

std::optional<ExperimentKind> parse_experiment_kind(std::string_view s) {
  for (const auto& [kind, name] : kKinds)
    if (name == s) return kind;
  return std::nullopt;
}

json parse_config_text(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError("line " + std::to_string(line) + ":" + std::to_string(col),
                      "invalid JSON");
  }
}

ExperimentConfig parse_config(const json& doc, std::vector<std::string>& errors) {
  ExperimentConfig c;
  c.source = doc;
  if (!doc.is_object()) {
    errors.push_back(": config must be a JSON object");
    return c;
  }
  const Reader root(doc, "", errors);
  root.only({"experiment", "seed", "threads", "output", "dataset", "partition", "predictor",
             "auxiliary", "schedule", "sigmas", "sigma", "noise_draws", "antithetic",
             "denominator", "sweep", "grid", "replicates", "trajectories", "feature",
             "fd_protocol"});

  std::string kind;
  root.read("experiment", kind);
  if (const auto k = parse_experiment_kind(kind))
    c.kind = *k;
  else
    errors.push_back("/experiment: " + (kind.empty() ? std::string("missing")
                                                     : "unknown experiment '" + kind + "'"));
  if (!root.has("seed")) errors.push_back("/seed: missing (seed is mandatory)");
  root.read("seed", c.seed);
  root.read("threads", c.threads);
  root.read("output", c.output);
  if (c.threads < 1) errors.push_back("/threads: must be >= 1");

  {
    const Reader r = root.child("dataset");
    r.only({"kind", "mode", "n_per_split", "radius", "seed", "path"});
    r.read("kind", c.dataset.kind);
    std::string mode = "symmetric";
    r.read("mode", mode);
    guarded(errors, r.at("mode"), [&] { c.dataset.mode = parse_circle_mode(mode); });
    r.read("n_per_split", c.dataset.n_per_split);
    r.read("radius", c.dataset.radius);
    r.read("seed", c.dataset.seed);
    r.read("path", c.dataset.path);
    if (c.dataset.kind != "circle" && c.dataset.kind != "csv")
      errors.push_back(r.at("kind") + ": must be 'circle' or 'csv'");
    if (c.dataset.kind == "csv" && c.dataset.path.empty())
      errors.push_back(r.at("path") + ": csv dataset needs a path");
    if (c.dataset.kind == "circle") {
      if (c.dataset.n_per_split < 2) errors.push_back(r.at("n_per_split") + ": must be >= 2");
      if (!(c.dataset.radius > 0.0)) errors.push_back(r.at("radius") + ": must be > 0");
    }
  }
  {
    const Reader r = root.child("partition");
    r.only({"k", "method", "seed"});
    r.read("k", c.partition.k);
    std::string method = "angular";
    r.read("method", method);
    guarded(errors, r.at("method"), [&] { c.partition.method = parse_partition_method(method); });
    r.read("seed", c.partition.seed);
    if (c.partition.k < 1) errors.push_back(r.at("k") + ": must be >= 1");
  }
  if (root.has("predictor"))
    guarded(errors, "/predictor", [&] { c.predictor = predictor_from_json(doc["predictor"]); });
  if (root.has("auxiliary"))
    guarded(errors, "/auxiliary", [&] { c.auxiliary = predictor_from_json(doc["auxiliary"]); });
  {
    const Reader r = root.child("schedule");
    r.only({"sigma_min", "sigma_max", "rho", "n_steps"});
    r.read("sigma_min", c.schedule.sigma_min);
    r.read("sigma_max", c.schedule.sigma_max);
    r.read("rho", c.schedule.rho);
    r.read("n_steps", c.schedule.n_steps);
    guarded(errors, "/schedule", [&] { build_schedule(c.schedule); });
  }
  root.read("sigmas", c.sigmas);
  for (double s : c.sigmas)
    if (!(s > 0.0)) errors.push_back("/sigmas: every sigma must be > 0");
  if (root.has("sigma")) {
    double s = 0.0;
    root.read("sigma", s);
    if (!(s > 0.0)) errors.push_back("/sigma: must be > 0");
    c.sigma = s;
  }
  root.read("noise_draws", c.noise_draws);
  if (c.noise_draws < 1) errors.push_back("/noise_draws: must be >= 1");
  root.read("antithetic", c.antithetic);
  std::string denom = "train";
  root.read("denominator", denom);
  guarded(errors, "/denominator", [&] { c.denominator = parse_denominator(denom); });
  {
    const Reader r = root.child("sweep");
    r.only({"delta", "n", "k", "w", "sigma"});
    r.read("delta", c.sweep.delta);
    r.read("n", c.sweep.n);
    r.read("k", c.sweep.k);
    r.read("w", c.sweep.w);
    r.read("sigma", c.sweep.sigma);
    for (double d : c.sweep.delta)
      if (!(d >= 0.0)) errors.push_back(r.at("delta") + ": every delta must be >= 0");
    for (double w : c.sweep.w)
      if (!(w >= 0.0)) errors.push_back(r.at("w") + ": every weight must be >= 0");
    for (double s : c.sweep.sigma)
      if (!(s > 0.0)) errors.push_back(r.at("sigma") + ": every sigma must be > 0");
    for (int n : c.sweep.n)
      if (n < 2) errors.push_back(r.at("n") + ": every N must be >= 2");
    for (int k : c.sweep.k)
      if (k < 1) errors.push_back(r.at("k") + ": every k must be >= 1");
  }
  {
    const Reader r = root.child("grid");
    r.only({"bounds", "resolution"});
    if (r.has("bounds")) {
      std::vector<double> b;
      r.read("bounds", b);
      if (b.size() == 4) {
        c.grid.x_min = b[0];
        c.grid.x_max = b[1];
        c.grid.y_min = b[2];
        c.grid.y_max = b[3];
      } else {
        errors.push_back(r.at("bounds") + ": expected [x_min, x_max, y_min, y_max]");
      }
    } else if (c.dataset.kind == "circle") {
      const double b = 1.25 * c.dataset.radius;
      c.grid = {-b, b, -b, b, c.grid.resolution};
    }
    r.read("resolution", c.grid.resolution);
    if (c.grid.resolution < 1) errors.push_back(r.at("resolution") + ": must be >= 1");
    if (!(c.grid.x_max > c.grid.x_min) || !(c.grid.y_max > c.grid.y_min))
      errors.push_back(r.at("bounds") + ": empty region");
  }
  root.read("replicates", c.replicates);
  if (c.replicates < 1) errors.push_back("/replicates: must be >= 1");
  root.read("trajectories", c.trajectories);
  {
    const Reader r = root.child("feature");
    r.only({"kind", "out_dim", "seed", "path"});
    r.read("kind", c.feature.kind);
    r.read("out_dim", c.feature.out_dim);
    r.read("seed", c.feature.seed);
    r.read("path", c.feature.path);
    if (c.feature.kind != "identity" && c.feature.kind != "random-linear" &&
        c.feature.kind != "external")
      errors.push_back(r.at("kind") + ": must be identity, random-linear or external");
    if (c.feature.kind == "external" && c.feature.path.empty())
      errors.push_back(r.at("path") + ": external features need a path");
    if (c.feature.out_dim < 1) errors.push_back(r.at("out_dim") + ": must be >= 1");
  }
  {
    const Reader r = root.child("fd_protocol");
    r.only({"generated", "train", "val", "n_subsets", "prior", "subset_size", "n_generated"});
    r.read("generated", c.fd.generated);
    r.read("train", c.fd.train);
    r.read("val", c.fd.val);
    r.read("n_subsets", c.fd.n_subsets);
    r.read("prior", c.fd.prior);
    if (r.has("subset_size")) {
      std::size_t s = 0;
      r.read("subset_size", s);
      c.fd.subset_size = s;
    }
    r.read("n_generated", c.fd.n_generated);
    if (c.fd.prior != "match" && c.fd.prior != "uniform")
      errors.push_back(r.at("prior") + ": must be 'match' or 'uniform'");
    if (c.fd.n_subsets < 1) errors.push_back(r.at("n_subsets") + ": must be >= 1");
    const bool any_file = !c.fd.generated.empty() || !c.fd.train.empty() || !c.fd.val.empty();
    const bool all_files = !c.fd.generated.empty() && !c.fd.train.empty() && !c.fd.val.empty();
    if (any_file && !all_files)
      errors.push_back(r.at("generated") + ": generated, train and val files go together");
  }

  auto require = [&](bool ok, const char* where, const char* what) {
    if (!ok) errors.push_back(std::string(where) + ": " + what);
  };
  switch (c.kind) {
    case ExperimentKind::kDeltaSweep:
      require(!c.sweep.delta.empty(), "/sweep/delta", "delta-sweep needs a non-empty list");
      break;
    case ExperimentKind::kDensitySweep:
      require(!c.sweep.n.empty(), "/sweep/n", "density-sweep needs a non-empty list");
      require(c.dataset.kind == "circle", "/dataset/kind", "density-sweep needs a circle dataset");
      break;
    case ExperimentKind::kGranularitySweep:
      require(!c.sweep.k.empty(), "/sweep/k", "granularity-sweep needs a non-empty list");
      break;
    case ExperimentKind::kGuidanceSweep:
      require(!c.sweep.w.empty(), "/sweep/w", "guidance-sweep needs a non-empty list");
      require(c.auxiliary.has_value(), "/auxiliary", "guidance-sweep needs an auxiliary predictor");
      break;
    case ExperimentKind::kFlowField:
      require(!c.sweep.sigma.empty(), "/sweep/sigma", "flow-field needs a non-empty list");
      break;
    case ExperimentKind::kGapGrid:
      require(c.sigma.has_value() || !c.sweep.sigma.empty(), "/sigma",
              "gap-grid needs sigma (or sweep.sigma)");
      break;
    default:
      break;
  }
  return c;
}

std::vector<std::string> validate(const json& doc) {
  std::vector<std::string> errors;
  const ExperimentConfig c = parse_config(doc, errors);
  if (!doc.is_object()) return errors;

  const bool dataset_ok = std::none_of(errors.begin(), errors.end(), [](const std::string& e) {
    return e.rfind("/dataset", 0) == 0 || e.rfind("/partition", 0) == 0 || e.rfind("/sweep", 0) == 0;
  });
  if (!dataset_ok) return errors;

  // Partition feasibility on every dataset the experiment would build.
  std::vector<int> ks = {c.partition.k};
  if (c.kind == ExperimentKind::kGranularitySweep) ks = c.sweep.k;
  std::vector<int> ns = {0};
  if (c.kind == ExperimentKind::kDensitySweep) ns = c.sweep.n;
  for (int n : ns) {
    for (int k : ks) {
      guarded(errors, "/partition", [&] {
        const PointDataset ds = build_dataset(c.dataset, n);
        if (static_cast<std::size_t>(k) > ds.count(Split::kTrain))
          throw DegeneratePartition("degenerate partition: k=" + std::to_string(k) +
                                    " exceeds the " + std::to_string(ds.count(Split::kTrain)) +
                                    " train points");
        build_labeled(c, k, n);
      });
    }
  }

  if (errors.empty()) {
    guarded(errors, "/predictor", [&] {
      const int k = c.kind == ExperimentKind::kGranularitySweep ? 1 : c.partition.k;
      const PointDataset ds = build_labeled(c, k);
      c.predictor.validate(ds.num_classes());
      if (c.auxiliary) c.auxiliary->validate(ds.num_classes());
    });
  }

  if (c.kind == ExperimentKind::kFdProtocol && errors.empty()) {
    guarded(errors, "/fd_protocol", [&] {
      const FdInputs in = fd_inputs(c, false);
      std::vector<std::string> warnings;
      check_feasible(in.train, fd_plan(c, in.val, warnings));
    });
  }
  return errors;
}

fs::path resolve_output_dir(const ExperimentConfig& config,
                            const std::optional<std::string>& explicit_dir) {
  if (explicit_dir && !explicit_dir->empty()) return *explicit_dir;
  if (!config.output.empty()) return config.output;
  const std::string leaf = std::string(to_string(config.kind)) + "-" + std::to_string(config.seed);
  if (const char* root = std::getenv("GENGAP_OUTPUT_ROOT"); root && *root)
    return fs::path(root) / leaf;
  return fs::path("runs") / leaf;
}

namespace {

class OutputWriter {
 public:
  explicit OutputWriter(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  void write(const std::string& name, const std::string& content) {
    std::ofstream out(dir_ / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir_ / name).string());
    out << content;
    files_.push_back({name, hex64(fnv1a(content)), content.size()});
  }
  void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

  const fs::path& dir() const { return dir_; }
  const std::vector<ManifestEntry>& files() const { return files_; }

 private:
  fs::path dir_;
  std::vector<ManifestEntry> files_;
};

template <class Fn>
std::string render(Fn&& fn) {
  std::ostringstream s;
  fn(s);
  return s.str();
}

std::string tag(double v) { return format_double(v); }

struct ReplicateStats {
  std::vector<double> peaks;
  std::vector<double> peak_sigmas;
};

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double stderr_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

json curve_summary(const ReplicateStats& s) {
  return {{"peak_gap", s.peaks.front()},
          {"peak_sigma", s.peak_sigmas.front()},
          {"replicate_peak_gap", s.peaks},
          {"replicate_peak_sigma", s.peak_sigmas},
          {"peak_gap_mean", mean_of(s.peaks)},
          {"peak_gap_se", stderr_of(s.peaks)},
          {"peak_sigma_mean", mean_of(s.peak_sigmas)},
          {"peak_sigma_se", stderr_of(s.peak_sigmas)}};
}

// Gap curves for every replicate; replicate 0 goes to <stem>.csv.
ReplicateStats run_curves(OutputWriter& out, const ExperimentConfig& c, const Denoiser& denoiser,
                          const PointDataset& ds, const std::string& stem) {
  ReplicateStats stats;
  const auto sigmas = sigma_grid(c);
  for (int r = 0; r < c.replicates; ++r) {
    const GapCurve curve = gap_curve(denoiser, ds, sigmas, draws_for(c, r), c.denominator, c.threads);
    const std::string name = r == 0 ? stem + ".csv" : stem + "_r" + std::to_string(r) + ".csv";
    out.write(name, render([&](std::ostream& s) { write_gap_curve_csv(s, curve); }));
    const auto peak = curve.peak_index();
    stats.peaks.push_back(peak ? curve.gap[*peak] : std::nan(""));
    stats.peak_sigmas.push_back(peak ? curve.sigmas[*peak] : std::nan(""));
  }
  return stats;
}

PredictorSpec with_delta(const PredictorSpec& base, double delta) {
  PredictorSpec s = base;
  if (s.kind == PredictorKind::kOptimal || s.kind == PredictorKind::kGuided)
    s = PredictorSpec::error_prone(delta);
  s.delta = delta;
  return s;
}

void run_gap_curve(OutputWriter& out, const ExperimentConfig& c) {
  const PointDataset ds = build_labeled(c, c.partition.k);
  const Denoiser d(c.predictor, ds);
  const auto stats = run_curves(out, c, d, ds, "gap_curve");
  out.write_json("summary.json", curve_summary(stats));
}

void run_delta_sweep(OutputWriter& out, const ExperimentConfig& c) {
  const PointDataset ds = build_labeled(c, c.partition.k);
  json entries = json::array();
  for (double delta : c.sweep.delta) {
    const Denoiser d(with_delta(c.predictor, delta), ds);
    const auto stats = run_curves(out, c, d, ds, "gap_curve_delta_" + tag(delta));
    json e = curve_summary(stats);
    e["delta"] = delta;
    entries.push_back(e);
  }
  out.write_json("summary.json", {{"entries", entries}});
}

void run_density_sweep(OutputWriter& out, const ExperimentConfig& c) {
  json entries = json::array();
  for (int n : c.sweep.n) {
    const PointDataset ds = build_labeled(c, c.partition.k, n);
    const Denoiser d(c.predictor, ds);
    const auto stats = run_curves(out, c, d, ds, "gap_curve_n_" + std::to_string(n));
    json e = curve_summary(stats);
    e["n"] = n;
    entries.push_back(e);
  }
  out.write_json("summary.json", {{"entries", entries}});
}

void run_granularity_sweep(OutputWriter& out, const ExperimentConfig& c) {
  json entries = json::array();
  for (int k : c.sweep.k) {
    const PointDataset ds = build_labeled(c, k);
    const Denoiser d(PredictorSpec::conditional(c.predictor.delta), ds);
    const auto stats = run_curves(out, c, d, ds, "gap_curve_k_" + std::to_string(k));
    json e = curve_summary(stats);
    e["k"] = k;
    entries.push_back(e);
  }
  out.write_json("summary.json", {{"entries", entries}});
}

void run_guidance_sweep(OutputWriter& out, const ExperimentConfig& c) {
  const PointDataset ds = build_labeled(c, c.partition.k);
  json entries = json::array();
  for (double w : c.sweep.w) {
    const Denoiser d(PredictorSpec::guided(c.predictor, *c.auxiliary, w), ds);
    const auto stats = run_curves(out, c, d, ds, "gap_curve_w_" + tag(w));
    json e = curve_summary(stats);
    e["w"] = w;
    entries.push_back(e);
  }
  out.write_json("summary.json", {{"entries", entries}});
}

void run_gap_grid(OutputWriter& out, const ExperimentConfig& c) {
  const PointDataset ds = build_labeled(c, c.partition.k);
  const double sigma = c.sigma ? *c.sigma : c.sweep.sigma.front();
  std::vector<std::pair<std::string, PredictorSpec>> specs;
  if (c.sweep.delta.empty())
    specs.emplace_back("gap_grid", c.predictor);
  else
    for (double delta : c.sweep.delta)
      specs.emplace_back("gap_grid_delta_" + tag(delta), with_delta(c.predictor, delta));

  json entries = json::array();
  for (const auto& [stem, spec] : specs) {
    const Denoiser d(spec, ds);
    const GapGrid grid = gap_grid(d, ds, sigma, c.grid, draws_for(c, 0), c.threads);
    out.write(stem + ".csv", render([&](std::ostream& s) { write_gap_grid_csv(s, grid); }));
    entries.push_back({{"file", stem + ".csv"},
                       {"predictor", to_json(spec)},
                       {"sigma", sigma},
                       {"e_train", grid.e_train},
                       {"area_gap_le_0.5", grid.area_at_most(0.5)},
                       {"area_fraction_gap_le_0.5", grid.area_fraction_at_most(0.5)}});
  }
  out.write_json("summary.json", {{"entries", entries}});
}

void run_flow_field(OutputWriter& out, const ExperimentConfig& c) {
  const PointDataset ds = build_labeled(c, c.partition.k);
  const Denoiser d(c.predictor, ds);
  const int condition = d.spec().needs_condition() ? 0 : kNoCondition;
  for (double sigma : c.sweep.sigma) {
    out.write("flow_field_sigma_" + tag(sigma) + ".csv", render([&](std::ostream& s) {
      s << "x,y,pred_x,pred_y,error\n";
      for (int j = 0; j < c.grid.resolution; ++j) {
        for (int i = 0; i < c.grid.resolution; ++i) {
          Point x(2);
          x << c.grid.x_center(i), c.grid.y_center(j);
          const Point y = d(x, sigma, condition);
          s << format_double(x[0]) << ',' << format_double(x[1]) << ',' << format_double(y[0])
            << ',' << format_double(y[1]) << ',' << format_double((y - x).norm()) << '\n';
        }
      }
    }));
  }
  const NoiseSchedule schedule = build_schedule(c.schedule);
  std::vector<Trajectory> lines;
  for (std::size_t i = 0; i < c.trajectories; ++i)
    lines.push_back(heun_sample(d, schedule, c.seed + i, condition));
  out.write("trajectories.csv", render([&](std::ostream& s) { write_trajectories_csv(s, lines); }));
}

LadderArgs ladder_args(const ExperimentConfig& c, const NoiseSchedule* schedule) {
  LadderArgs a;
  a.schedule = schedule;
  a.draws = draws_for(c, 0);
  a.n_trajectories = c.trajectories;
  a.denominator = c.denominator;
  a.threads = c.threads;
  return a;
}

double peak_sigma_or(const ExperimentConfig& c, const Denoiser& d, const PointDataset& ds) {
  if (c.sigma) return *c.sigma;
  const GapCurve curve = gap_curve(d, ds, sigma_grid(c), draws_for(c, 0), c.denominator, c.threads);
  return curve.peak_sigma();
}

void run_ladder(OutputWriter& out, const ExperimentConfig& c) {
  const PointDataset ds = build_labeled(c, c.partition.k);
  const Denoiser d(c.predictor, ds);
  const NoiseSchedule schedule = build_schedule(c.schedule);
  const FeatureMap feature = build_feature(c, ds);
  LadderArgs args = ladder_args(c, &schedule);
  args.sigma = peak_sigma_or(c, d, ds);

  out.write("ladder.csv", render([&](std::ostream& s) {
    s << "metric,sigma,m_train,m_val,gap,defined\n";
    for (LadderKind k : {LadderKind::kRL2Pix, LadderKind::kRL2Feat, LadderKind::kRFD,
                         LadderKind::kTFD}) {
      const LadderResult r = ladder_metric(k, d, ds, feature, args);
      s << to_string(k) << ',' << (k == LadderKind::kTFD ? "nan" : format_double(*args.sigma))
        << ',' << format_double(r.m_train) << ',' << format_double(r.m_val) << ','
        << (r.gap.defined ? format_double(r.gap.gap) : "nan") << ',' << (r.gap.defined ? 1 : 0)
        << '\n';
    }
  }));
}

// Five levels centered on the reconstruction-gap peak.
std::vector<double> default_stops(const ExperimentConfig& c, const Denoiser& d,
                                  const PointDataset& ds, const NoiseSchedule& schedule) {
  const double peak = peak_sigma_or(c, d, ds);
  const auto levels = schedule.positive_levels();
  const auto centre = static_cast<long>(snap_to_level(schedule, peak));
  const long last = static_cast<long>(levels.size()) - 1;
  const long lo = std::clamp(centre - 2, 0L, std::max(last - 4, 0L));
  std::vector<double> out;
  for (long i = lo; i <= std::min(lo + 4, last); ++i) out.push_back(levels[static_cast<std::size_t>(i)]);
  return out;
}

void run_truncation(OutputWriter& out, const ExperimentConfig& c) {
  const PointDataset ds = build_labeled(c, c.partition.k);
  const Denoiser d(c.predictor, ds);
  const NoiseSchedule schedule = build_schedule(c.schedule);
  const FeatureMap feature = build_feature(c, ds);
  const auto stops = c.sweep.sigma.empty() ? default_stops(c, d, ds, schedule) : c.sweep.sigma;
  const auto rows = truncated_gap_comparison(d, ds, schedule, stops, feature, ladder_args(c, &schedule));
  auto gap_str = [](const GapValue& g) { return g.defined ? format_double(g.gap) : std::string("nan"); };
  out.write("truncation.csv", render([&](std::ostream& s) {
    s << "level,sigma,trunc_m_train,trunc_m_val,trunc_gap,fwd_m_train,fwd_m_val,fwd_gap\n";
    for (const auto& r : rows)
      s << r.level << ',' << format_double(r.sigma) << ',' << format_double(r.truncated.m_train)
        << ',' << format_double(r.truncated.m_val) << ',' << gap_str(r.truncated.gap) << ','
        << format_double(r.forward.m_train) << ',' << format_double(r.forward.m_val) << ','
        << gap_str(r.forward.gap) << '\n';
  }));
}

void run_fd_protocol(OutputWriter& out, const ExperimentConfig& c) {
  const FdInputs in = fd_inputs(c, true);
  const FeatureSet& generated = in.generated;
  const FeatureSet& train = in.train;
  const FeatureSet& val = in.val;
  std::vector<std::string> warnings;
  const SubsetPlan plan = fd_plan(c, val, warnings);

  const auto subsets = draw_subsets(train, plan);
  const ProtocolResult vs_train = protocol_fd(generated, subsets);
  const ProtocolResult vs_val = protocol_fd(generated, {val});
  json report = {{"train", protocol_report(vs_train, plan, generated, subsets)},
                 {"val", protocol_report(vs_val, plan, generated, {val})}};
  report["gap"] = relative_gap(vs_train.mean, vs_val.mean, c.denominator).gap;
  if (plan.n_subsets >= 2) {
    const MismatchResult m = baseline_mismatch(train, val, plan);
    report["baseline"] = {{"train_vs_train", m.train_vs_train}, {"train_vs_val", m.train_vs_val}};
    warnings.insert(warnings.end(), m.warnings.begin(), m.warnings.end());
  }
  report["warnings"] = warnings;
  out.write_json("fd_protocol.json", report);
}

}  // namespace

Manifest run(const json& doc, const fs::path& out_dir) {
  std::vector<std::string> errors = validate(doc);
  if (!errors.empty()) {
    std::string msg;
    for (const auto& e : errors) msg += (msg.empty() ? "" : "\n") + e;
    throw ConfigError("", msg);
  }
  std::vector<std::string> ignored;
  const ExperimentConfig c = parse_config(doc, ignored);

  const auto start = std::chrono::steady_clock::now();
  OutputWriter out(out_dir);
  switch (c.kind) {
    case ExperimentKind::kGapCurve: run_gap_curve(out, c); break;
    case ExperimentKind::kGapGrid: run_gap_grid(out, c); break;
    case ExperimentKind::kFlowField: run_flow_field(out, c); break;
    case ExperimentKind::kDeltaSweep: run_delta_sweep(out, c); break;
    case ExperimentKind::kDensitySweep: run_density_sweep(out, c); break;
    case ExperimentKind::kGranularitySweep: run_granularity_sweep(out, c); break;
    case ExperimentKind::kGuidanceSweep: run_guidance_sweep(out, c); break;
    case ExperimentKind::kLadder: run_ladder(out, c); break;
    case ExperimentKind::kTruncationCompare: run_truncation(out, c); break;
    case ExperimentKind::kFdProtocol: run_fd_protocol(out, c); break;
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  Manifest m;
  m.directory = out_dir;
  m.files = out.files();
  json files = json::array();
  for (const auto& f : m.files) files.push_back({{"path", f.path}, {"fnv1a", f.hash}, {"bytes", f.bytes}});
  m.json = {{"experiment", to_string(c.kind)},
            {"config", doc},
            {"files", files},
            {"wall_clock_seconds", seconds}};
  std::ofstream(out_dir / "manifest.json") << m.json.dump(2) << "\n";
  return m;
}

}  // namespace gengap
