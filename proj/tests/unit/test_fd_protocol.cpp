#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gengap/error.hpp"
#include "gengap/fd_protocol.hpp"
#include "gengap/rng.hpp"

using namespace gengap;

namespace {

// Labeled Gaussian cloud: n rows, dimension d, labels cycling over k classes.
FeatureSet cloud(std::size_t n, int d, int k, std::uint64_t seed, double shift = 0.0) {
  NormalSource src(seed);
  PointMatrix v(static_cast<Eigen::Index>(n), d);
  for (Eigen::Index r = 0; r < v.rows(); ++r) v.row(r) = src.vector(d).transpose().array() + shift;
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % static_cast<std::size_t>(k));
  return FeatureSet::make(std::move(v), std::move(labels));
}

ClassPrior histogram(const FeatureSet& s) { return match_prior(s); }

}  // namespace

TEST_CASE("match_prior") {
  PointMatrix v = PointMatrix::Zero(50, 2);
  std::vector<int> labels(50, 0);
  std::fill(labels.begin() + 30, labels.end(), 1);
  CHECK(match_prior(FeatureSet::make(v, labels)) == ClassPrior{{0, 30}, {1, 20}});
  CHECK(match_prior(FeatureSet::make(v, std::vector<int>(50, 0))) == ClassPrior{{0, 50}});
  CHECK_THROWS_AS(match_prior(FeatureSet::make(v, {})), InvalidArgument);

  auto ds = make_circle_dataset(16, 12, CircleMode::kSymmetric, 0);
  ds = apply_partition(ds, partition_classes(ds, 4, PartitionMethod::kAngularSector, 0));
  CHECK(match_prior(feature_set_from_split(ds, Split::kVal)) ==
        ClassPrior{{0, 4}, {1, 4}, {2, 4}, {3, 4}});
}

TEST_CASE("feature set validation") {
  PointMatrix v = PointMatrix::Zero(3, 2);
  CHECK_THROWS_AS(FeatureSet::make(v, {0, 2, 2}), InvalidArgument);
  CHECK_THROWS_AS(FeatureSet::make(v, {0, 1}), InvalidArgument);
  v(1, 1) = std::nan("");
  CHECK_THROWS_AS(FeatureSet::make(v, {}), InvalidArgument);
  const auto a = cloud(10, 3, 2, 1), b = cloud(10, 3, 2, 1), c = cloud(10, 3, 2, 2);
  CHECK(a.id == b.id);
  CHECK(a.id != c.id);
}

TEST_CASE("draw_subsets") {
  const auto pool = cloud(300, 3, 3, 7);

  SUBCASE("plan size equal to pool size returns a permutation of the pool") {
    const auto plan = SubsetPlan::from_prior(match_prior(pool), 1, 4);
    const auto idx = draw_subset_indices(pool, plan);
    REQUIRE(idx.size() == 1);
    std::vector<std::size_t> sorted = idx[0];
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> all(pool.size());
    std::iota(all.begin(), all.end(), 0);
    CHECK(sorted == all);
  }
  SUBCASE("every subset matches the prior exactly") {
    const ClassPrior prior{{0, 40}, {1, 25}, {2, 10}};
    const auto plan = SubsetPlan::from_prior(prior, 15, 9);
    const auto subsets = draw_subsets(pool, plan);
    REQUIRE(subsets.size() == 15);
    for (const auto& s : subsets) {
      CHECK(histogram(s) == prior);
      CHECK(s.size() == 75);
    }
    for (const auto& idx : draw_subset_indices(pool, plan))
      CHECK(std::set<std::size_t>(idx.begin(), idx.end()).size() == idx.size());
  }
  SUBCASE("same seed gives identical indices") {
    const auto plan = SubsetPlan::from_prior({{0, 20}, {1, 20}, {2, 20}}, 5, 123);
    CHECK(draw_subset_indices(pool, plan) == draw_subset_indices(pool, plan));
    auto other = plan;
    other.seed = 124;
    CHECK(draw_subset_indices(pool, plan) != draw_subset_indices(pool, other));
  }
  SUBCASE("insufficient class population names the class") {
    const auto plan = SubsetPlan::from_prior({{0, 10}, {1, 101}}, 2, 0);
    try {
      draw_subsets(pool, plan);
      FAIL("expected InfeasiblePlan");
    } catch (const InfeasiblePlan& e) {
      CHECK(e.class_id() == 1);
    }
    CHECK_THROWS_AS(check_feasible(pool, SubsetPlan::from_prior({{5, 1}}, 1, 0)), InfeasiblePlan);
  }
}

TEST_CASE("protocol_fd") {
  const auto gen = cloud(200, 3, 2, 1);
  const auto same = protocol_fd(gen, {gen, gen, gen});
  CHECK(same.mean <= 1e-10);

  const auto ref = cloud(200, 3, 2, 2);
  const auto one = protocol_fd(gen, {ref});
  CHECK(one.per_reference.size() == 1);
  CHECK(one.mean == one.per_reference[0]);

  const auto pool = cloud(1000, 3, 2, 3);
  const auto subsets = draw_subsets(pool, SubsetPlan::from_prior({{0, 64}, {1, 64}}, 15, 0));
  const auto many = protocol_fd(gen, subsets);
  CHECK(many.mean >= *std::min_element(many.per_reference.begin(), many.per_reference.end()));
  CHECK(many.mean <= *std::max_element(many.per_reference.begin(), many.per_reference.end()));

  CHECK_THROWS_AS(protocol_fd(gen, {}), InvalidArgument);
  CHECK_THROWS_AS(protocol_fd(gen, {cloud(50, 2, 1, 0)}), InvalidArgument);
}

TEST_CASE("baseline mismatch") {
  SUBCASE("validation drawn from the same pool is indistinguishable") {
    const auto pool = cloud(4000, 3, 2, 10);
    const auto val = draw_subsets(pool, SubsetPlan::from_prior({{0, 256}, {1, 256}}, 1, 77))[0];
    const auto m = baseline_mismatch(pool, val, SubsetPlan::from_prior({{0, 256}, {1, 256}}, 10, 1));
    CHECK(m.train_vs_val <= 2.0 * m.train_vs_train);
    CHECK(m.train_vs_val >= 0.5 * m.train_vs_train);
  }
  SUBCASE("shifted validation is far above the floor") {
    const auto pool = cloud(4000, 3, 2, 10);
    const auto val = cloud(512, 3, 2, 11, 5.0 / std::sqrt(3.0));
    const auto m = baseline_mismatch(pool, val, SubsetPlan::from_prior({{0, 256}, {1, 256}}, 10, 1));
    CHECK(m.train_vs_val > 10 * m.train_vs_train);
    CHECK(m.train_vs_val == doctest::Approx(25.0).epsilon(0.1));
  }
  SUBCASE("small validation sets clamp the subset size") {
    const auto pool = cloud(4000, 3, 2, 10);
    const auto val = cloud(100, 3, 2, 12);
    const auto m = baseline_mismatch(pool, val, SubsetPlan::from_prior({{0, 256}, {1, 256}}, 3, 1));
    CHECK(m.plan.subset_size == 100);
    CHECK(m.warnings.size() == 1);
  }
  CHECK_THROWS_AS(baseline_mismatch(cloud(100, 2, 1, 0), cloud(50, 2, 1, 1),
                                    SubsetPlan::from_prior({{0, 10}}, 1, 0)),
                  InvalidArgument);
}

TEST_CASE("clamp_to_reference uses largest remainders") {
  const auto plan = SubsetPlan::from_prior({{0, 5}, {1, 3}, {2, 2}}, 4, 0);
  const auto c = clamp_to_reference(plan, 7);
  // Exact shares 3.5, 2.1, 1.4: floors 3, 2, 1, then the 0.5 remainder wins.
  CHECK(c.plan.class_prior == ClassPrior{{0, 4}, {1, 2}, {2, 1}});
  CHECK(c.plan.subset_size == 7);
  CHECK(c.warning);
  const auto same = clamp_to_reference(plan, 10);
  CHECK(same.plan.class_prior == plan.class_prior);
  CHECK_FALSE(same.warning);
}

TEST_CASE("uniform prior sums to the subset size") {
  const auto p = uniform_prior(4, 1000, 3);
  std::size_t total = 0;
  for (const auto& [c, n] : p) total += n;
  CHECK(total == 1000);
  CHECK(p.size() == 4);
  CHECK(uniform_prior(4, 1000, 3) == p);
}

TEST_CASE("per-reference spread shrinks with subset size") {
  const auto pool = cloud(20000, 3, 2, 21);
  const auto gen = cloud(2000, 3, 2, 22);
  auto spread = [&](std::size_t half) {
    const auto r = protocol_fd(gen, draw_subsets(pool, SubsetPlan::from_prior({{0, half}, {1, half}}, 15, 5)));
    double m = r.mean, v = 0;
    for (double x : r.per_reference) v += (x - m) * (x - m);
    return v / static_cast<double>(r.per_reference.size() - 1);
  };
  const double v64 = spread(32), v256 = spread(128), v1024 = spread(512);
  CHECK(v64 > v256);
  CHECK(v256 > v1024);
}

TEST_CASE("FGL1 feature files") {
  PointMatrix v(2, 3);
  v << 1.5, -2, 0.25, 3, 4, 5;
  const auto set = FeatureSet::make(v, {0, 1}, FeatureOrigin::kExternalFile);
  std::stringstream buf;
  write_feature_file(buf, set);
  const std::string bytes = buf.str();
  REQUIRE(bytes.size() == 4 + 12 + 6 * 4 + 2 * 4);
  CHECK(bytes.substr(0, 4) == "FGL1");
  const unsigned char header[12] = {2, 0, 0, 0, 3, 0, 0, 0, 1, 0, 0, 0};
  CHECK(std::memcmp(bytes.data() + 4, header, 12) == 0);
  float first = 0;
  std::memcpy(&first, bytes.data() + 16, 4);
  CHECK(first == 1.5f);

  std::istringstream in(bytes);
  const auto back = read_feature_file(in);
  CHECK(back.vectors == v);
  CHECK(back.labels == std::vector<int>{0, 1});
  CHECK(back.origin == FeatureOrigin::kExternalFile);

  std::istringstream bad("FGL2xxxxxxxxxxxx");
  CHECK_THROWS_AS(read_feature_file(bad), FormatError);
  std::istringstream truncated(bytes.substr(0, 20));
  CHECK_THROWS_AS(read_feature_file(truncated), FormatError);

  const auto dir = std::filesystem::temp_directory_path() / "gengap_fgl1_test";
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir / "set.fgl", std::ios::binary);
    f << bytes;
    std::ofstream c(dir / "set.csv");
    c << "x0,x1,x2,label,split\n1.5,-2,0.25,0,train\n3,4,5,1,val\n";
  }
  CHECK(load_feature_set(dir / "set.fgl").vectors == v);
  const auto csv = load_feature_set(dir / "set.csv");
  CHECK(csv.vectors == v);
  CHECK(csv.labels == std::vector<int>{0, 1});
  std::filesystem::remove_all(dir);
}

TEST_CASE("protocol report carries plan and hashes") {
  const auto gen = cloud(100, 2, 2, 1);
  const auto pool = cloud(400, 2, 2, 2);
  const auto plan = SubsetPlan::from_prior({{0, 20}, {1, 20}}, 3, 0);
  const auto subsets = draw_subsets(pool, plan);
  const auto j = protocol_report(protocol_fd(gen, subsets), plan, gen, subsets);
  CHECK(j["plan"]["n_subsets"] == 3);
  CHECK(j["per_reference_fd"].size() == 3);
  CHECK(j["generated_hash"] == gen.id);
  CHECK(j["reference_hashes"].size() == 3);
}
