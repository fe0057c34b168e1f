#pragma once

#include <cstdint>
#include <random>

#include "gengap/types.hpp"

namespace gengap {

// Seeded standard-normal source. A (seed, stream) pair identifies an
// independent, reproducible sequence; streams let per-point noise be drawn
// without depending on evaluation order.
class NormalSource {
 public:
  explicit NormalSource(std::uint64_t seed, std::uint64_t stream = 0);

  double next() { return normal_(engine_); }
  Point vector(Eigen::Index dim);
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream = 0);

}  // namespace gengap
