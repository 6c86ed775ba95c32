#pragma once

#include <cstdint>
#include <random>

namespace saae {

using Rng = std::mt19937_64;

// Independent random streams derived from one run seed. Each concern draws
// from its own stream so that, e.g., pair sampling never perturbs shuffling.
enum class Stream : std::uint32_t {
  Init = 1,
  Shuffle = 2,
  Pairs = 3,
  Synth = 4,
  Eval = 5,
};

inline Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t sub = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(sub),
                    static_cast<std::uint32_t>(sub >> 32)};
  return Rng(seq);
}

}  // namespace saae
