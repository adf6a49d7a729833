#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace acr {

/// Philox4x32-10 counter-based generator (Salmon et al., Random123).
///
/// A stream is addressed by (seed, stream id); the draw sequence inside a
/// stream is a pure function of that pair, so per-example noise can be
/// derived from (step, sample) without depending on batch order.
class Rng {
 public:
  using Block = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr std::string_view algorithm = "philox4x32-10";

  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  /// Raw bijection: ten Philox rounds of `counter` under `key`.
  static Block philox(Block counter, Key key);

  /// Independent child stream; deterministic in (seed, stream, id).
  [[nodiscard]] Rng substream(std::uint64_t id) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  std::uint32_t next_u32();
  std::uint64_t next_u64();
  /// Uniform on the open interval (0, 1).
  double uniform();
  /// Standard normal via Box-Muller.
  double normal();
  /// Standard Gumbel: -log(-log U).
  double gumbel();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t block_index_ = 0;
  Block buffer_{};
  int used_ = 4;
};

}  // namespace acr
