#include "gengap/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <string>

#include "gengap/error.hpp"
#include "gengap/io.hpp"
#include "gengap/rng.hpp"

namespace gengap {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double angle_of(double x, double y) {
  double a = std::atan2(y, x);
  if (a < 0.0) a += kTwoPi;
  return a >= kTwoPi ? 0.0 : a;
}

void place_on_circle(PointMatrix& pts, Eigen::Index row, double radius, double angle) {
  pts(row, 0) = radius * std::cos(angle);
  pts(row, 1) = radius * std::sin(angle);
}

}  // namespace

std::string_view to_string(Split s) { return s == Split::kTrain ? "train" : "val"; }

Split parse_split(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  throw InvalidArgument("unknown split '" + std::string(s) + "'");
}

std::size_t PointDataset::count(Split s) const {
  return static_cast<std::size_t>(std::count(split.begin(), split.end(), s));
}

std::vector<std::size_t> PointDataset::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split.size(); ++i)
    if (split[i] == s) out.push_back(i);
  return out;
}

PointMatrix PointDataset::split_points(Split s) const {
  const auto idx = indices(s);
  PointMatrix out(static_cast<Eigen::Index>(idx.size()), dim());
  for (std::size_t r = 0; r < idx.size(); ++r)
    out.row(static_cast<Eigen::Index>(r)) = points.row(static_cast<Eigen::Index>(idx[r]));
  return out;
}

std::vector<int> PointDataset::split_labels(Split s) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < split.size(); ++i)
    if (split[i] == s) out.push_back(labels[i]);
  return out;
}

int PointDataset::num_classes() const {
  if (labels.empty()) return 0;
  return *std::max_element(labels.begin(), labels.end()) + 1;
}

void PointDataset::validate() const {
  if (labels.size() != size() || split.size() != size())
    throw InvalidArgument("dataset labels/split length does not match point count");
  if (dim() < 1) throw InvalidArgument("dataset has zero dimensions");
  if (!points.allFinite()) throw InvalidArgument("dataset contains non-finite coordinates");
  for (int l : labels)
    if (l < 0) throw InvalidArgument("negative class label");
}

CircleMode parse_circle_mode(std::string_view s) {
  if (s == "symmetric") return CircleMode::kSymmetric;
  if (s == "random") return CircleMode::kRandom;
  throw InvalidArgument("unknown circle mode '" + std::string(s) + "'");
}

PointDataset make_circle_dataset(int n_per_split, double radius, CircleMode mode,
                                 std::uint64_t seed) {
  if (n_per_split < 2) throw InvalidArgument("n_per_split must be at least 2");
  if (!(radius > 0.0) || !std::isfinite(radius)) throw InvalidArgument("radius must be positive");

  const auto n = static_cast<Eigen::Index>(n_per_split);
  PointDataset ds;
  ds.points.resize(2 * n, 2);
  ds.labels.assign(static_cast<std::size_t>(2 * n), 0);
  ds.split.assign(static_cast<std::size_t>(n), Split::kTrain);
  ds.split.resize(static_cast<std::size_t>(2 * n), Split::kVal);
  ds.seed = seed;
  ds.paired = true;

  if (mode == CircleMode::kSymmetric) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double a = kTwoPi * static_cast<double>(i) / static_cast<double>(n);
      place_on_circle(ds.points, i, radius, a);
      place_on_circle(ds.points, n + i, radius, a + std::numbers::pi / static_cast<double>(n));
    }
    return ds;
  }

  auto engine = make_engine(seed);
  std::uniform_real_distribution<double> uniform(0.0, kTwoPi);
  std::vector<double> angles(static_cast<std::size_t>(2 * n));
  for (auto& a : angles) a = uniform(engine);
  std::sort(angles.begin(), angles.end());
  for (Eigen::Index i = 0; i < n; ++i) {
    place_on_circle(ds.points, i, radius, angles[static_cast<std::size_t>(2 * i)]);
    place_on_circle(ds.points, n + i, radius, angles[static_cast<std::size_t>(2 * i + 1)]);
  }
  return ds;
}

PointDataset make_point_cloud_dataset(const PointMatrix& train, const PointMatrix& val) {
  if (train.rows() == 0) throw InvalidArgument("point cloud needs at least one train point");
  if (val.rows() > 0 && val.cols() != train.cols())
    throw InvalidArgument("train and val clouds differ in dimension");
  PointDataset ds;
  ds.points.resize(train.rows() + val.rows(), train.cols());
  ds.points.topRows(train.rows()) = train;
  if (val.rows() > 0) ds.points.bottomRows(val.rows()) = val;
  ds.labels.assign(ds.size(), 0);
  ds.split.assign(static_cast<std::size_t>(train.rows()), Split::kTrain);
  ds.split.resize(ds.size(), Split::kVal);
  ds.validate();
  return ds;
}

NoiseSchedule make_schedule(double sigma_min, double sigma_max, double rho, int n_steps) {
  if (!(sigma_min > 0.0) || !(sigma_min < sigma_max) || !std::isfinite(sigma_max))
    throw InvalidArgument("schedule needs 0 < sigma_min < sigma_max");
  if (!(rho > 0.0)) throw InvalidArgument("schedule rho must be positive");
  if (n_steps < 2) throw InvalidArgument("schedule needs at least 2 steps");

  NoiseSchedule s{sigma_min, sigma_max, rho, n_steps, {}};
  s.levels.reserve(static_cast<std::size_t>(n_steps) + 1);
  const double hi = std::pow(sigma_max, 1.0 / rho);
  const double lo = std::pow(sigma_min, 1.0 / rho);
  for (int i = 0; i < n_steps; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(n_steps - 1);
    s.levels.push_back(std::pow(hi + t * (lo - hi), rho));
  }
  // Pin the endpoints; pow round-trips are not exact.
  s.levels.front() = sigma_max;
  s.levels.back() = sigma_min;
  for (std::size_t i = 1; i < s.levels.size(); ++i)
    if (!(s.levels[i] < s.levels[i - 1]))
      throw InvalidArgument("schedule levels are not strictly decreasing");
  s.levels.push_back(0.0);
  return s;
}

PartitionMethod parse_partition_method(std::string_view s) {
  if (s == "angular" || s == "angular-sector") return PartitionMethod::kAngularSector;
  if (s == "kmeans" || s == "k-means") return PartitionMethod::kKMeans;
  throw InvalidArgument("unknown partition method '" + std::string(s) + "'");
}

std::string_view to_string(PartitionMethod m) {
  return m == PartitionMethod::kAngularSector ? "angular-sector" : "k-means";
}

namespace {

std::vector<int> angular_assignment(const PointDataset& ds, int k) {
  if (ds.dim() < 2) throw InvalidArgument("angular partition needs at least 2 dimensions");
  const double width = kTwoPi / static_cast<double>(k);
  std::vector<int> out(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const double a = angle_of(ds.points(r, 0), ds.points(r, 1));
    // Points sitting on a sector boundary belong to the sector that starts there.
    const auto sector = static_cast<long long>(std::floor(a / width + 1e-9));
    out[i] = static_cast<int>(sector % k);
  }
  return out;
}

int nearest_centroid(const Eigen::RowVectorXd& p, const PointMatrix& centroids) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    const double d = (centroids.row(c) - p).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

std::vector<int> kmeans_assignment(const PointDataset& ds, int k, std::uint64_t seed) {
  const PointMatrix train = ds.split_points(Split::kTrain);
  const auto n = static_cast<std::size_t>(train.rows());

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto engine = make_engine(seed);
  std::shuffle(order.begin(), order.end(), engine);

  PointMatrix centroids(k, ds.dim());
  for (int c = 0; c < k; ++c)
    centroids.row(c) = train.row(static_cast<Eigen::Index>(order[static_cast<std::size_t>(c)]));

  std::vector<int> assign(n, -1);
  constexpr int kMaxIterations = 1000;
  for (int iter = 0; iter < kMaxIterations; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const int c = nearest_centroid(train.row(static_cast<Eigen::Index>(i)), centroids);
      if (c != assign[i]) {
        assign[i] = c;
        changed = true;
      }
    }

    PointMatrix sums = PointMatrix::Zero(k, ds.dim());
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums.row(assign[i]) += train.row(static_cast<Eigen::Index>(i));
      ++counts[static_cast<std::size_t>(assign[i])];
    }
    bool reseeded = false;
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
        continue;
      }
      // Empty cluster: move it onto the train point farthest from its centroid.
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d =
            (train.row(static_cast<Eigen::Index>(i)) - centroids.row(assign[i])).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      centroids.row(c) = train.row(static_cast<Eigen::Index>(far));
      assign[far] = c;
      reseeded = true;
    }
    if (!changed && !reseeded) break;
  }

  std::vector<int> out(ds.size());
  std::size_t t = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.split[i] == Split::kTrain)
      out[i] = assign[t++];
    else
      out[i] = nearest_centroid(ds.points.row(static_cast<Eigen::Index>(i)), centroids);
  }
  return out;
}

}  // namespace

ClassPartition partition_classes(const PointDataset& ds, int k, PartitionMethod method,
                                 std::uint64_t seed) {
  const std::size_t n_train = ds.count(Split::kTrain);
  if (k < 1 || static_cast<std::size_t>(k) > n_train)
    throw InvalidArgument("partition needs 1 <= k <= n_train (k=" + std::to_string(k) +
                          ", n_train=" + std::to_string(n_train) + ")");

  ClassPartition p;
  p.k = k;
  p.method = method;
  if (k == 1)
    p.assignment.assign(ds.size(), 0);
  else if (method == PartitionMethod::kAngularSector)
    p.assignment = angular_assignment(ds, k);
  else
    p.assignment = kmeans_assignment(ds, k, seed);

  std::vector<std::size_t> train_counts(static_cast<std::size_t>(k), 0);
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds.split[i] == Split::kTrain) ++train_counts[static_cast<std::size_t>(p.assignment[i])];
  for (int c = 0; c < k; ++c)
    if (train_counts[static_cast<std::size_t>(c)] == 0)
      throw DegeneratePartition("class " + std::to_string(c) + " has no train points");
  return p;
}

PointDataset apply_partition(const PointDataset& ds, const ClassPartition& partition) {
  if (partition.assignment.size() != ds.size())
    throw InvalidArgument("partition does not cover the dataset");
  PointDataset out = ds;
  out.labels = partition.assignment;
  if (ds.paired && partition.k > 1) {
    std::vector<bool> seen(static_cast<std::size_t>(partition.k), false);
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (ds.split[i] == Split::kVal) seen[static_cast<std::size_t>(out.labels[i])] = true;
    for (int c = 0; c < partition.k; ++c)
      if (!seen[static_cast<std::size_t>(c)])
        throw DegeneratePartition("class " + std::to_string(c) +
                                  " has no validation points on a paired dataset");
  }
  return out;
}

void write_dataset_csv(std::ostream& out, const PointDataset& ds) {
  for (Eigen::Index d = 0; d < ds.dim(); ++d) out << 'x' << d << ',';
  out << "label,split\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (Eigen::Index d = 0; d < ds.dim(); ++d)
      out << format_double(ds.points(static_cast<Eigen::Index>(i), d)) << ',';
    out << ds.labels[i] << ',' << to_string(ds.split[i]) << '\n';
  }
}

PointDataset read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty dataset CSV");
  const auto header = split_csv_line(line);
  if (header.size() < 3 || header[header.size() - 2] != "label" || header.back() != "split")
    throw FormatError("dataset CSV header must be x0,...,x{d-1},label,split");
  const auto dim = static_cast<Eigen::Index>(header.size() - 2);
  for (Eigen::Index d = 0; d < dim; ++d)
    if (header[static_cast<std::size_t>(d)] != "x" + std::to_string(d))
      throw FormatError("unexpected column '" + header[static_cast<std::size_t>(d)] + "'");

  std::vector<std::vector<double>> rows;
  PointDataset ds;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw FormatError("line " + std::to_string(line_no) + ": expected " +
                        std::to_string(header.size()) + " fields");
    std::vector<double> row(static_cast<std::size_t>(dim));
    for (Eigen::Index d = 0; d < dim; ++d)
      row[static_cast<std::size_t>(d)] = parse_double(cells[static_cast<std::size_t>(d)]);
    rows.push_back(std::move(row));
    ds.labels.push_back(static_cast<int>(parse_int(cells[cells.size() - 2])));
    ds.split.push_back(parse_split(cells.back()));
  }
  ds.points.resize(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (Eigen::Index d = 0; d < dim; ++d)
      ds.points(static_cast<Eigen::Index>(r), d) = rows[r][static_cast<std::size_t>(d)];
  ds.validate();
  return ds;
}

}  // namespace gengap
