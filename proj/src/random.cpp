#include "bayeshom/random.hpp"

#include <boost/random/normal_distribution.hpp>

namespace bayeshom {

std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

Vector standard_normal(std::mt19937_64& rng, Index n) {
  boost::random::normal_distribution<double> normal(0.0, 1.0);
  Vector out(n);
  for (Index i = 0; i < n; ++i) out(i) = normal(rng);
  return out;
}

}  // namespace bayeshom
