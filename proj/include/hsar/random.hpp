#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace hsar {

/// Philox4x32-10 counter-based generator.  The key is
/// derived from the seed and the upper half of the counter from a stream id,
/// so independent streams need no coordination.  Satisfies
/// UniformRandomBitGenerator.
class Philox4x32 {
 public:
  using result_type = std::uint32_t;

  explicit Philox4x32(std::uint64_t seed = 0, std::uint64_t stream = 0) noexcept;

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept;

  /// One block of output for a given counter; exposed for known-answer tests.
  static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> counter,
                                            std::array<std::uint32_t, 2> key) noexcept;

 private:
  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> counter_;
  std::array<std::uint32_t, 4> buffer_{};
  int used_ = 4;
};

}  // namespace hsar
