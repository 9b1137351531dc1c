#include "shufflevar/rng.hpp"

#include <array>

namespace shufflevar {

Engine make_engine(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  // seed_seq mixes its 32-bit inputs with a fully specified algorithm.
  const std::array<std::uint32_t, 7> words = {
      static_cast<std::uint32_t>(seed),        static_cast<std::uint32_t>(seed >> 32),
      static_cast<std::uint32_t>(stream),      static_cast<std::uint32_t>(stream >> 32),
      static_cast<std::uint32_t>(index),       static_cast<std::uint32_t>(index >> 32),
      0x5eedu};
  std::seed_seq seq(words.begin(), words.end());
  return Engine(seq);
}

}  // namespace shufflevar
