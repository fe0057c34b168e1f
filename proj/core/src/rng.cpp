#include "gengap/rng.hpp"

namespace gengap {

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

NormalSource::NormalSource(std::uint64_t seed, std::uint64_t stream)
    : engine_(make_engine(seed, stream)) {}

Point NormalSource::vector(Eigen::Index dim) {
  Point out(dim);
  for (Eigen::Index i = 0; i < dim; ++i) out[i] = next();
  return out;
}

}  // namespace gengap
