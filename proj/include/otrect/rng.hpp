#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace otrect {

/// Name recorded in run metadata so outputs can be audited.
inline constexpr std::string_view kRngAlgorithm = "mt19937_64 seeded by splitmix64(master, stream)";

/// SplitMix64 finalizer; a counter-based mixing function.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Seed for an independent stream derived from (master seed, stream id).
/// Streams can be nested: stream_seed(stream_seed(m, a), b).
std::uint64_t stream_seed(std::uint64_t master, std::uint64_t stream) noexcept;

/// Generator for a derived stream.
std::mt19937_64 make_stream(std::uint64_t master, std::uint64_t stream);

}  // namespace otrect
