#include "rerand/rng.hpp"

#include <cmath>
#include <limits>

#include "rerand/errors.hpp"

namespace rerand {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream_id) {
  std::seed_seq seq{
      static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
      static_cast<std::uint32_t>(stream_id),
      static_cast<std::uint32_t>(stream_id >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), engine_(make_engine(seed, stream_id)) {}

std::uint64_t RngStream::next_u64() { return engine_(); }

double RngStream::uniform01() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::below(std::uint64_t n) {
  if (n == 0) throw Error(ErrorCode::invalid_argument, "below(0) is undefined");
  // rejection on the top of the range keeps the modulo unbiased
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - (n - 1);
  for (;;) {
    const std::uint64_t x = next_u64();
    const std::uint64_t r = x % n;
    if (x - r <= limit) return r;
  }
}

double RngStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = 1.0 - uniform01();  // (0, 1]
  const double u2 = uniform01();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 6.283185307179586476925286766559 * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

RngStream RngStream::child(std::uint64_t index) const {
  std::uint64_t state = stream_id_ ^ 0xd1b54a32d192ed03ull;
  std::uint64_t mixed = splitmix64(state);
  state = mixed ^ index;
  return RngStream(seed_, splitmix64(state));
}

std::uint64_t stream_key(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t state = 0x853c49e6748fea9bull;
  std::uint64_t key = splitmix64(state);
  for (std::uint64_t part : parts) {
    state = key ^ part;
    key = splitmix64(state);
  }
  return key;
}

}  // namespace rerand
