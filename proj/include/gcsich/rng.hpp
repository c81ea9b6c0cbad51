#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace gcsich::num {

// Counter-based generator: value k of a stream is splitmix64's finalizer
// applied to (key + k * 0x9E3779B97F4A7C15), where key mixes the run seed with
// the FNV-1a hash of the stream name. Streams with different names are
// independent; a stream's output never depends on what other streams drew.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string_view name);

  /// Stream keyed by this stream's key and `name`; the parent's counter is
  /// not consumed.
  RngStream child(std::string_view name) const;

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Standard normal via Box-Muller; consumes two counter values per call.
  double normal();
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  /// Uniform integer in [lo, hi].
  std::int64_t between(std::int64_t lo, std::int64_t hi);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  RngStream(std::uint64_t key, int) : key_(key) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a(std::string_view text);

}  // namespace gcsich::num
