#pragma once

#include <cstdint>
#include <string_view>

namespace cordcpd {

/// Counter-based generator: the i-th draw is a pure function of (key, i), so a
/// stream can be re-derived anywhere from its key alone. Distribution sampling
/// is implemented here rather than with <random> distributions, whose output is
/// implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t key) noexcept : key_(key) {}

  /// Independent stream for (series index, purpose). Purpose tags are hashed.
  Rng substream(std::uint64_t index, std::string_view purpose) const noexcept;
  static Rng derive(std::uint64_t master_seed, std::uint64_t index, std::string_view purpose) noexcept {
    return Rng(master_seed).substream(index, purpose);
  }

  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;
  /// Uniform in (0, 1); never returns zero.
  double uniform_open() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in the inclusive range [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) noexcept;
  double normal() noexcept;
  double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }
  /// Standard Gumbel(0, 1) draw.
  double gumbel() noexcept;
  bool bernoulli(double p) noexcept { return uniform() < p; }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t mix64(std::uint64_t x) noexcept;
std::uint64_t fnv1a64(std::string_view text) noexcept;

}  // namespace cordcpd
