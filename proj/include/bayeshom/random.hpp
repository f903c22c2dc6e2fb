#ifndef BAYESHOM_RANDOM_HPP
#define BAYESHOM_RANDOM_HPP

#include <cstdint>
#include <random>

#include "bayeshom/common.hpp"

namespace bayeshom {

/// Name recorded in output metadata so runs can be reproduced elsewhere.
inline constexpr const char* kGeneratorName = "mt19937_64/seed_seq(seed,index)/boost.normal_distribution";

/// Independent stream for (seed, index); used for per-trial and per-sample
/// substreams so results do not depend on thread count.
std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t index);

/// n i.i.d. N(0,1) values. Boost's normal distribution is used because the
/// standard one is implementation-defined.
Vector standard_normal(std::mt19937_64& rng, Index n);

}  // namespace bayeshom

#endif  // BAYESHOM_RANDOM_HPP
