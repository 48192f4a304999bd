#pragma once

#include <cstdint>
#include <random>

namespace superres {

using Engine = std::mt19937_64;

/// Independent stream domains so that, e.g., crosstalk sampling and photon
/// counting with the same master seed never share a stream.
enum class StreamDomain : std::uint32_t {
  crosstalk = 0x7c3a1u,
  counts = 0x51d2eu,
  null_counts = 0x0e9b4u,
};

/// Engine for sample `index` of `domain` under `seed`. The result depends only
/// on (seed, domain, index), so ensembles can be generated in any order.
inline Engine make_stream(std::uint64_t seed, StreamDomain domain, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(domain), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return Engine(seq);
}

}  // namespace superres
