#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace rerand {

// Deterministic random stream keyed by (seed, stream_id).
//
// The engine and every variate transform are pinned here so the same key
// reproduces the same sequence across platforms and build modes; none of the
// <random> distribution classes are used since the standard leaves their
// algorithms unspecified.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  std::uint64_t next_u64();

  // uniform on [0,1) with 53-bit resolution
  double uniform01();

  // unbiased integer in [0, n); n >= 1
  std::uint64_t below(std::uint64_t n);

  // standard normal, Box-Muller with the second variate cached
  double normal();

  // stream with a distinct id derived from this stream's key; independent of
  // how much of this stream has been consumed
  RngStream child(std::uint64_t index) const;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Collapses an index tuple (cell, dataset, purpose, ...) into a stream id.
std::uint64_t stream_key(std::initializer_list<std::uint64_t> parts);

}  // namespace rerand
