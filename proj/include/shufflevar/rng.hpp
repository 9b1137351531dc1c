#pragma once

#include <cstdint>
#include <random>

namespace shufflevar {

using Engine = std::mt19937_64;

/**
 * Independent generator for the substream identified by (seed, stream, index).
 *
 * The engine state depends only on the triple, never on how many draws other
 * substreams have made, so replicate r of a sweep sees the same numbers under
 * any thread count or evaluation order.
 */
Engine make_engine(std::uint64_t seed, std::uint64_t stream = 0, std::uint64_t index = 0);

}  // namespace shufflevar
