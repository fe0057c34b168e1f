#pragma once

// Extended-precision reference evaluations used as test oracles.

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "gengap/types.hpp"

namespace oracle {

using Real = boost::multiprecision::cpp_bin_float_50;

// Direct softmax-weighted sum without exponent shifting.
inline gengap::Point posterior_mean(const gengap::Point& x, double sigma,
                                    const gengap::PointMatrix& points) {
  const auto d = points.cols();
  std::vector<Real> acc(static_cast<std::size_t>(d), Real(0));
  Real total = 0;
  const Real s2 = Real(sigma) * Real(sigma);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    Real dist = 0;
    for (Eigen::Index j = 0; j < d; ++j) {
      const Real diff = Real(x[j]) - Real(points(i, j));
      dist += diff * diff;
    }
    const Real w = exp(-dist / (2 * s2));
    total += w;
    for (Eigen::Index j = 0; j < d; ++j) acc[j] += w * Real(points(i, j));
  }
  gengap::Point out(d);
  for (Eigen::Index j = 0; j < d; ++j) out[j] = static_cast<double>(acc[j] / total);
  return out;
}

inline gengap::Point error_prone(const gengap::Point& x, double sigma, double delta,
                                 const gengap::PointMatrix& points) {
  const double st = std::sqrt(sigma * sigma + delta * delta);
  const gengap::Point y = posterior_mean(x, st, points);
  const Real s2 = Real(sigma) * Real(sigma), d2 = Real(delta) * Real(delta);
  gengap::Point out(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j)
    out[j] = static_cast<double>((d2 * Real(x[j]) + s2 * Real(y[j])) / (s2 + d2));
  return out;
}

}  // namespace oracle
