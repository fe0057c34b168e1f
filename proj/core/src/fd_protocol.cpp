#include "gengap/fd_protocol.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>

#include <nlohmann/json.hpp>

#include "gengap/error.hpp"
#include "gengap/io.hpp"
#include "gengap/rng.hpp"

namespace gengap {

static_assert(std::endian::native == std::endian::little,
              "feature file I/O assumes a little-endian host");

namespace {

constexpr std::array<char, 4> kMagic = {'F', 'G', 'L', '1'};

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T)))
    throw FormatError("feature file truncated");
  return v;
}

std::string content_hash(const PointMatrix& vectors, const std::vector<int>& labels) {
  std::uint64_t h = fnv1a({});
  const auto rows = static_cast<std::uint64_t>(vectors.rows());
  const auto cols = static_cast<std::uint64_t>(vectors.cols());
  h = fnv1a({reinterpret_cast<const char*>(&rows), sizeof(rows)}, h);
  h = fnv1a({reinterpret_cast<const char*>(&cols), sizeof(cols)}, h);
  h = fnv1a({reinterpret_cast<const char*>(vectors.data()),
             static_cast<std::size_t>(vectors.size()) * sizeof(double)},
            h);
  h = fnv1a({reinterpret_cast<const char*>(labels.data()), labels.size() * sizeof(int)}, h);
  return hex64(h);
}

FeatureSet subset_of(const FeatureSet& pool, const std::vector<std::size_t>& rows) {
  std::vector<Eigen::Index> idx(rows.begin(), rows.end());
  std::vector<int> labels;
  labels.reserve(rows.size());
  for (std::size_t r : rows) labels.push_back(pool.labels[r]);
  // Subsets of a labeled pool may miss classes; skip the contiguity check.
  FeatureSet s;
  s.vectors = pool.vectors(idx, Eigen::all);
  s.labels = std::move(labels);
  s.origin = pool.origin;
  s.id = content_hash(s.vectors, s.labels);
  return s;
}

}  // namespace

FeatureSet FeatureSet::make(PointMatrix vectors, std::vector<int> labels, FeatureOrigin origin) {
  if (!vectors.allFinite()) throw InvalidArgument("feature set contains non-finite entries");
  if (!labels.empty()) {
    if (labels.size() != static_cast<std::size_t>(vectors.rows()))
      throw InvalidArgument("feature set needs one label per row");
    const int max_label = *std::max_element(labels.begin(), labels.end());
    std::vector<char> seen(static_cast<std::size_t>(std::max(max_label, 0)) + 1, 0);
    for (int l : labels) {
      if (l < 0) throw InvalidArgument("negative class label in feature set");
      seen[static_cast<std::size_t>(l)] = 1;
    }
    for (std::size_t c = 0; c < seen.size(); ++c)
      if (!seen[c])
        throw InvalidArgument("feature set labels are not contiguous from 0 (missing " +
                              std::to_string(c) + ")");
  }
  FeatureSet s;
  s.vectors = std::move(vectors);
  s.labels = std::move(labels);
  s.origin = origin;
  s.id = content_hash(s.vectors, s.labels);
  return s;
}

FeatureSet feature_set_from_split(const PointDataset& ds, Split split, const FeatureMap& feature) {
  return FeatureSet::make(feature.apply(ds.split_points(split)), ds.split_labels(split));
}

ClassPrior match_prior(const FeatureSet& reference) {
  if (!reference.labeled()) throw InvalidArgument("class prior needs a labeled reference");
  ClassPrior prior;
  for (int l : reference.labels) ++prior[l];
  return prior;
}

ClassPrior uniform_prior(int num_classes, std::size_t subset_size, std::uint64_t seed) {
  if (num_classes < 1) throw InvalidArgument("uniform prior needs at least one class");
  auto engine = make_engine(seed);
  std::uniform_int_distribution<int> pick(0, num_classes - 1);
  ClassPrior prior;
  for (int c = 0; c < num_classes; ++c) prior[c] = 0;
  for (std::size_t i = 0; i < subset_size; ++i) ++prior[pick(engine)];
  return prior;
}

SubsetPlan SubsetPlan::from_prior(ClassPrior prior, std::size_t n_subsets, std::uint64_t seed) {
  SubsetPlan p;
  p.n_subsets = n_subsets;
  p.subset_size = 0;
  for (const auto& [c, n] : prior) p.subset_size += n;
  p.class_prior = std::move(prior);
  p.seed = seed;
  p.validate();
  return p;
}

void SubsetPlan::validate() const {
  if (n_subsets < 1) throw InvalidArgument("plan needs at least one subset");
  std::size_t total = 0;
  for (const auto& [c, n] : class_prior) {
    if (c < 0) throw InvalidArgument("plan has a negative class id");
    total += n;
  }
  if (total != subset_size)
    throw InvalidArgument("plan prior sums to " + std::to_string(total) + ", subset size is " +
                          std::to_string(subset_size));
  if (subset_size == 0) throw InvalidArgument("plan subset size is zero");
}

void check_feasible(const FeatureSet& pool, const SubsetPlan& plan) {
  plan.validate();
  const ClassPrior available = match_prior(pool);
  for (const auto& [c, n] : plan.class_prior) {
    const auto it = available.find(c);
    const std::size_t have = it == available.end() ? 0 : it->second;
    if (n > have)
      throw InfeasiblePlan("class " + std::to_string(c) + " needs " + std::to_string(n) +
                               " samples but the pool has " + std::to_string(have),
                           c);
  }
}

std::vector<std::vector<std::size_t>> draw_subset_indices(const FeatureSet& pool,
                                                          const SubsetPlan& plan) {
  check_feasible(pool, plan);
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < pool.labels.size(); ++i) by_class[pool.labels[i]].push_back(i);

  std::vector<std::vector<std::size_t>> out(plan.n_subsets);
  for (std::size_t s = 0; s < plan.n_subsets; ++s) {
    auto engine = make_engine(plan.seed, s);
    auto& rows = out[s];
    rows.reserve(plan.subset_size);
    for (const auto& [c, count] : plan.class_prior) {
      if (count == 0) continue;
      std::vector<std::size_t> members = by_class.at(c);
      // Partial Fisher-Yates: the first `count` slots become the sample.
      for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, members.size() - 1);
        std::swap(members[i], members[pick(engine)]);
        rows.push_back(members[i]);
      }
    }
  }
  return out;
}

std::vector<FeatureSet> draw_subsets(const FeatureSet& pool, const SubsetPlan& plan) {
  std::vector<FeatureSet> out;
  for (const auto& rows : draw_subset_indices(pool, plan)) out.push_back(subset_of(pool, rows));
  return out;
}

ProtocolResult protocol_fd(const FeatureSet& generated, const std::vector<FeatureSet>& references) {
  if (references.empty()) throw InvalidArgument("protocol FD needs at least one reference");
  const GaussianSummary gen = fit_gaussian(generated.vectors);
  ProtocolResult r;
  r.per_reference.reserve(references.size());
  for (const auto& ref : references) {
    if (ref.dim() != generated.dim())
      throw InvalidArgument("reference feature dimension " + std::to_string(ref.dim()) +
                            " differs from generated " + std::to_string(generated.dim()));
    r.per_reference.push_back(frechet_distance(gen, fit_gaussian(ref.vectors)));
  }
  r.mean = std::accumulate(r.per_reference.begin(), r.per_reference.end(), 0.0) /
           static_cast<double>(r.per_reference.size());
  // The mean of finitely many values can round just outside their range.
  const auto [lo, hi] = std::minmax_element(r.per_reference.begin(), r.per_reference.end());
  r.mean = std::clamp(r.mean, *lo, *hi);
  return r;
}

ClampedPlan clamp_to_reference(const SubsetPlan& plan, std::size_t reference_size) {
  plan.validate();
  if (reference_size >= plan.subset_size) return {plan, std::nullopt};
  if (reference_size == 0) throw InvalidArgument("reference set is empty");

  SubsetPlan out = plan;
  out.subset_size = reference_size;
  const double scale = static_cast<double>(reference_size) / static_cast<double>(plan.subset_size);
  std::vector<std::pair<double, int>> remainders;
  std::size_t assigned = 0;
  for (auto& [c, n] : out.class_prior) {
    const double exact = static_cast<double>(n) * scale;
    const auto whole = static_cast<std::size_t>(std::floor(exact));
    remainders.emplace_back(exact - static_cast<double>(whole), c);
    n = whole;
    assigned += whole;
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < reference_size; ++i, ++assigned)
    ++out.class_prior[remainders[i % remainders.size()].second];

  return {out, "subset size clamped from " + std::to_string(plan.subset_size) + " to " +
                   std::to_string(reference_size) + " to match the reference set"};
}

MismatchResult baseline_mismatch(const FeatureSet& train_pool, const FeatureSet& val_set,
                                 const SubsetPlan& plan) {
  if (plan.n_subsets < 2) throw InvalidArgument("baseline mismatch needs at least 2 subsets");
  if (train_pool.dim() != val_set.dim())
    throw InvalidArgument("train pool and validation set differ in dimension");

  MismatchResult r;
  auto clamped = clamp_to_reference(plan, val_set.size());
  if (clamped.warning) r.warnings.push_back(*clamped.warning);
  r.plan = clamped.plan;

  const auto subsets = draw_subsets(train_pool, r.plan);
  std::vector<GaussianSummary> fits;
  fits.reserve(subsets.size());
  for (const auto& s : subsets) fits.push_back(fit_gaussian(s.vectors));
  const GaussianSummary val_fit = fit_gaussian(val_set.vectors);

  double pair_sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < fits.size(); ++i)
    for (std::size_t j = i + 1; j < fits.size(); ++j, ++pairs)
      pair_sum += frechet_distance(fits[i], fits[j]);
  double val_sum = 0.0;
  for (const auto& f : fits) val_sum += frechet_distance(f, val_fit);

  r.train_vs_train = pair_sum / static_cast<double>(pairs);
  r.train_vs_val = val_sum / static_cast<double>(fits.size());
  return r;
}

void write_feature_file(std::ostream& out, const FeatureSet& set) {
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(set.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(set.dim()));
  put<std::uint32_t>(out, set.labeled() ? 1u : 0u);
  for (Eigen::Index r = 0; r < set.vectors.rows(); ++r)
    for (Eigen::Index c = 0; c < set.vectors.cols(); ++c)
      put<float>(out, static_cast<float>(set.vectors(r, c)));
  if (set.labeled())
    for (int l : set.labels) put<std::uint32_t>(out, static_cast<std::uint32_t>(l));
}

FeatureSet read_feature_file(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic)
    throw FormatError("not a feature file (bad magic)");
  const auto n = get<std::uint32_t>(in);
  const auto d = get<std::uint32_t>(in);
  const auto label_flag = get<std::uint32_t>(in);
  if (label_flag > 1) throw FormatError("feature file label flag must be 0 or 1");
  PointMatrix vectors(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index r = 0; r < vectors.rows(); ++r)
    for (Eigen::Index c = 0; c < vectors.cols(); ++c) vectors(r, c) = get<float>(in);
  std::vector<int> labels;
  if (label_flag == 1) {
    labels.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) labels.push_back(static_cast<int>(get<std::uint32_t>(in)));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes in feature file");
  return FeatureSet::make(std::move(vectors), std::move(labels), FeatureOrigin::kExternalFile);
}

FeatureSet load_feature_set(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open feature file " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  in.clear();
  in.seekg(0);
  if (magic == kMagic) return read_feature_file(in);
  const PointDataset ds = read_dataset_csv(in);
  return FeatureSet::make(ds.points, ds.labels, FeatureOrigin::kExternalFile);
}

nlohmann::json to_json(const SubsetPlan& plan) {
  nlohmann::json prior = nlohmann::json::object();
  for (const auto& [c, n] : plan.class_prior) prior[std::to_string(c)] = n;
  return {{"n_subsets", plan.n_subsets},
          {"subset_size", plan.subset_size},
          {"class_prior", prior},
          {"seed", plan.seed}};
}

nlohmann::json protocol_report(const ProtocolResult& result, const SubsetPlan& plan,
                               const FeatureSet& generated,
                               const std::vector<FeatureSet>& references) {
  nlohmann::json refs = nlohmann::json::array();
  for (const auto& r : references) refs.push_back(r.id);
  return {{"mean_fd", result.mean},
          {"per_reference_fd", result.per_reference},
          {"plan", to_json(plan)},
          {"generated_hash", generated.id},
          {"reference_hashes", refs}};
}

}  // namespace gengap
