#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "gengap/error.hpp"
#include "gengap/geometry.hpp"
#include "gengap/predictor.hpp"
#include "oracle.hpp"

using namespace gengap;

namespace {

Point pt(double a, double b) {
  Point p(2);
  p << a, b;
  return p;
}

PointMatrix two_points() {
  PointMatrix p(2, 2);
  p << 1, 0, -1, 0;
  return p;
}

}  // namespace

TEST_CASE("posterior mean of two symmetric points at an equidistant x is the origin") {
  for (double s : {0.01, 0.5, 1.0, 7.0, 1e3}) {
    const Point y = posterior_mean(pt(0, 0.5), s, two_points());
    CHECK(std::abs(y[0]) <= 1e-15);
    CHECK(std::abs(y[1]) <= 1e-15);
  }
}

TEST_CASE("posterior mean collapses onto the nearest point at small sigma") {
  const Point y = posterior_mean(pt(0.9, 0), 1e-3, two_points());
  CHECK((y - pt(1, 0)).norm() <= 1e-9);
}

TEST_CASE("posterior mean matches extended-precision direct summation") {
  const auto ds = make_circle_dataset(4, 1.0, CircleMode::kSymmetric, 0);
  const PointMatrix train = ds.split_points(Split::kTrain);
  const Point x = pt(0.5, 0.5);
  CHECK((posterior_mean(x, 1.0, train) - oracle::posterior_mean(x, 1.0, train)).norm() <= 1e-14);

  const auto big = make_circle_dataset(16, 12.0, CircleMode::kRandom, 4);
  const PointMatrix tr = big.split_points(Split::kTrain);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-15, 15);
  for (int i = 0; i < 50; ++i) {
    const Point q = pt(u(rng), u(rng));
    for (double s : {0.3, 1.1, 4.0, 28.0})
      CHECK((posterior_mean(q, s, tr) - oracle::posterior_mean(q, s, tr)).norm() <= 1e-12 * 12);
  }
}

TEST_CASE("posterior mean rejects invalid input") {
  CHECK_THROWS_AS(posterior_mean(pt(0, 0), 0.0, two_points()), InvalidArgument);
  CHECK_THROWS_AS(posterior_mean(pt(0, 0), -1.0, two_points()), InvalidArgument);
  CHECK_THROWS_AS(posterior_mean(pt(0, 0), 1.0, PointMatrix(0, 2)), InvalidArgument);
}

TEST_CASE("error-prone predictor with delta=0 is the posterior mean bitwise") {
  const auto ds = make_circle_dataset(16, 12.0, CircleMode::kSymmetric, 0);
  const PointMatrix tr = ds.split_points(Split::kTrain);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-15, 15);
  for (int i = 0; i < 100; ++i) {
    const Point x = pt(u(rng), u(rng));
    for (double s : {0.01, 0.7, 3.0, 28.0}) {
      const Point a = error_prone_predict(x, s, 0.0, tr);
      const Point b = posterior_mean(x, s, tr);
      CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * 2) == 0);
    }
  }
}

TEST_CASE("error-prone predictor with huge delta stays at x") {
  const auto ds = make_circle_dataset(16, 12.0, CircleMode::kSymmetric, 0);
  const PointMatrix tr = ds.split_points(Split::kTrain);
  const double delta = 1e6, sigma = 1.0;
  for (const Point& x : {pt(0, 0), pt(5, -3), pt(12, 0)}) {
    const Point ys = posterior_mean(x, std::sqrt(sigma * sigma + delta * delta), tr);
    CHECK((error_prone_predict(x, sigma, delta, tr) - x).norm() <= 1e-9 * ((x - ys).norm() + 1));
  }
}

TEST_CASE("error-prone predictor with delta=sigma=1 averages x and y*(x, sqrt 2)") {
  const auto ds = make_circle_dataset(16, 12.0, CircleMode::kSymmetric, 0);
  const PointMatrix tr = ds.split_points(Split::kTrain);
  const Point x = pt(7, 4);
  const Point expect = (x + oracle::posterior_mean(x, std::sqrt(2.0), tr)) / 2;
  CHECK((error_prone_predict(x, 1.0, 1.0, tr) - expect).norm() <= 1e-13);
  CHECK((error_prone_predict(x, 1.0, 1.0, tr) - oracle::error_prone(x, 1.0, 1.0, tr)).norm() <=
        1e-13);
}

TEST_CASE("decomposition residual vanishes") {
  const auto ds = make_circle_dataset(16, 12.0, CircleMode::kSymmetric, 0);
  const PointMatrix tr = ds.split_points(Split::kTrain);
  CHECK(decomposition_residual(pt(3, 1), 0.8, 0.0, tr) <= 1e-15);

  std::mt19937_64 rng(0);
  std::uniform_real_distribution<double> u(-15, 15), ls(std::log(1e-3), std::log(28.0)),
      ld(0.0, 3.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Point x = pt(u(rng), u(rng));
    const double s = std::exp(ls(rng)), d = ld(rng);
    const double scale = x.norm() + error_prone_predict(x, s, d, tr).norm();
    worst = std::max(worst, decomposition_residual(x, s, d, tr) / scale);
  }
  MESSAGE("max scaled residual: " << worst);
  CHECK(worst <= 1e-12);
}

TEST_CASE("large sigma tends to the train mean") {
  const auto ds = make_circle_dataset(16, 12.0, CircleMode::kRandom, 9);
  const PointMatrix tr = ds.split_points(Split::kTrain);
  const Point mean = tr.colwise().mean().transpose();
  for (const Point& x : {pt(-15, -15), pt(0, 0), pt(15, 3)})
    CHECK((posterior_mean(x, 1e4 * 12, tr) - mean).norm() <= 1e-6 * 12);
}

TEST_CASE("small sigma returns the nearest train point") {
  const auto ds = make_circle_dataset(16, 12.0, CircleMode::kRandom, 9);
  const PointMatrix tr = ds.split_points(Split::kTrain);
  double min_gap = 1e300;
  for (Eigen::Index i = 0; i < tr.rows(); ++i)
    for (Eigen::Index j = i + 1; j < tr.rows(); ++j) min_gap = std::min(min_gap, (tr.row(i) - tr.row(j)).norm());
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-15, 15);
  for (int k = 0; k < 200; ++k) {
    const Point x = pt(u(rng), u(rng));
    Eigen::Index best = 0;
    ((tr.rowwise() - x.transpose()).rowwise().squaredNorm()).minCoeff(&best);
    CHECK((posterior_mean(x, 1e-3 * min_gap, tr) - tr.row(best).transpose()).norm() <= 1e-9);
  }
}

TEST_CASE("posterior mean is invariant to train order") {
  const auto ds = make_circle_dataset(16, 12.0, CircleMode::kRandom, 2);
  PointMatrix tr = ds.split_points(Split::kTrain);
  PointMatrix shuffled = tr;
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(tr.rows()));
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(3);
  std::shuffle(perm.begin(), perm.end(), rng);
  for (std::size_t i = 0; i < perm.size(); ++i) shuffled.row(static_cast<Eigen::Index>(i)) = tr.row(perm[i]);
  std::uniform_real_distribution<double> u(-15, 15);
  for (int k = 0; k < 100; ++k) {
    const Point x = pt(u(rng), u(rng));
    for (double s : {0.2, 1.1, 9.0})
      CHECK((posterior_mean(x, s, tr) - posterior_mean(x, s, shuffled)).norm() <= 1e-14 * 12);
  }
}

TEST_CASE("conditional predictor") {
  const auto base = make_circle_dataset(16, 3.0, CircleMode::kSymmetric, 0);

  SUBCASE("k=1 equals the unconditional predictor") {
    const auto part = partition_classes(base, 1, PartitionMethod::kAngularSector, 0);
    const auto ds = apply_partition(base, part);
    const PointMatrix tr = ds.split_points(Split::kTrain);
    for (double s : {0.3, 1.0, 5.0}) {
      const Point x = pt(1.2, -0.7);
      CHECK(conditional_predict(x, s, PredictorSpec::conditional(0.0, 0), ds, part) ==
            posterior_mean(x, s, tr));
      const Denoiser cond(PredictorSpec::conditional(0.0), ds), plain(PredictorSpec::optimal(), ds);
      CHECK(cond(x, s, 0) == plain(x, s));
    }
  }

  SUBCASE("a one-point class returns that point") {
    const auto part = partition_classes(base, 16, PartitionMethod::kAngularSector, 0);
    const auto ds = apply_partition(base, part);
    const auto train = ds.indices(Split::kTrain);
    for (std::size_t i : train) {
      const int c = ds.labels[i];
      const Point y = conditional_predict(pt(-2, 2), 0.9, PredictorSpec::conditional(0.0, c), ds, part);
      CHECK((y - ds.points.row(static_cast<Eigen::Index>(i)).transpose()).norm() == 0.0);
    }
  }

  SUBCASE("k=4 class 0 matches the oracle over its four points") {
    const auto part = partition_classes(base, 4, PartitionMethod::kAngularSector, 0);
    const auto ds = apply_partition(base, part);
    PointMatrix cls(4, 2);
    Eigen::Index r = 0;
    for (std::size_t i : ds.indices(Split::kTrain))
      if (ds.labels[i] == 0) cls.row(r++) = ds.points.row(static_cast<Eigen::Index>(i));
    REQUIRE(r == 4);
    const Point x = pt(3, 0);
    CHECK((conditional_predict(x, 1.0, PredictorSpec::conditional(0.0, 0), ds, part) -
           oracle::posterior_mean(x, 1.0, cls))
              .norm() <= 1e-14);
  }

  SUBCASE("unknown class is rejected") {
    const auto part = partition_classes(base, 4, PartitionMethod::kAngularSector, 0);
    const auto ds = apply_partition(base, part);
    CHECK_THROWS_AS(conditional_predict(pt(0, 1), 1.0, PredictorSpec::conditional(0.0, 4), ds, part),
                    InvalidArgument);
  }
}

TEST_CASE("guided predictor") {
  const auto ds = make_circle_dataset(16, 3.0, CircleMode::kSymmetric, 0);
  const Denoiser p(PredictorSpec::error_prone(0.5), ds), a(PredictorSpec::error_prone(2.0), ds);
  const Point x = pt(3, 0);

  const Point y0 = guided_predict(x, 1.0, p, a, 0.0);
  const Point yp = p(x, 1.0);
  CHECK(std::memcmp(y0.data(), yp.data(), sizeof(double) * 2) == 0);

  for (double w : {0.0, 0.5, 1.0, 3.0}) CHECK(guided_predict(x, 1.0, p, p, w) == yp);

  const PointMatrix tr = ds.split_points(Split::kTrain);
  const Point expect = 2 * oracle::error_prone(x, 1.0, 0.5, tr) - oracle::error_prone(x, 1.0, 2.0, tr);
  CHECK((guided_predict(x, 1.0, p, a, 1.0) - expect).norm() <= 1e-13);

  const Denoiser tree(PredictorSpec::guided(PredictorSpec::error_prone(0.5),
                                            PredictorSpec::error_prone(2.0), 1.0),
                      ds);
  CHECK(tree(x, 1.0) == guided_predict(x, 1.0, p, a, 1.0));
}

TEST_CASE("predictor spec validation and JSON round trip") {
  CHECK_THROWS_AS(PredictorSpec::error_prone(-0.1).validate(1), InvalidArgument);
  CHECK_THROWS_AS(PredictorSpec::conditional(0.0, 3).validate(2), InvalidArgument);
  CHECK_THROWS_AS(
      PredictorSpec::guided(PredictorSpec::optimal(), PredictorSpec::optimal(), -1).validate(1),
      InvalidArgument);

  const auto spec = PredictorSpec::guided(PredictorSpec::conditional(0.8, 1),
                                          PredictorSpec::error_prone(2.0), 1.5);
  const auto j = to_json(spec);
  const auto back = predictor_from_json(j);
  CHECK(to_json(back) == j);
  CHECK(back.kind == PredictorKind::kGuided);
  CHECK(back.weight == 1.5);
  CHECK(back.primary->class_id == 1);
  CHECK(back.auxiliary->delta == 2.0);
  CHECK_FALSE(back.needs_condition());
  CHECK(PredictorSpec::guided(PredictorSpec::conditional(0.8), PredictorSpec::optimal(), 1.0)
            .needs_condition());
  CHECK_THROWS(predictor_from_json(nlohmann::json{{"kind", "magic"}}));
}
