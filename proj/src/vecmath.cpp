#include "salera/vecmath.hpp"

#include <utility>

namespace salera {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Partition::Partition(std::vector<Segment> segments) : segments_(std::move(segments)) {
  if (segments_.empty()) throw DimensionError("Partition: at least one segment required");
  Index next = 0;
  for (const auto& s : segments_) {
    if (s.start != next) throw DimensionError("Partition: segment '" + s.name + "' leaves a gap or overlaps");
    if (s.length < 1) throw DimensionError("Partition: segment '" + s.name + "' is empty");
    next += s.length;
  }
  dimension_ = next;
}

Partition Partition::whole(Index d, std::string name) {
  return Partition({Segment{std::move(name), 0, d}});
}

RngStream::RngStream(std::uint64_t seed) : seed_(seed) {
  std::uint64_t x = seed;
  for (auto& w : s_) w = splitmix64(x);
}

RngStream::result_type RngStream::operator()() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

RngStream RngStream::split(std::uint64_t stream_id) const {
  std::uint64_t x = seed_ ^ 0xD1B54A32D192ED03ull;
  std::uint64_t mixed = splitmix64(x);
  x = mixed + stream_id * 0xA24BAED4963EE407ull;
  return RngStream(splitmix64(x));
}

double RngStream::uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

std::uint64_t RngStream::uniform_index(std::uint64_t n) {
  if (n == 0) throw ParameterError("uniform_index: empty range");
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    const std::uint64_t r = (*this)();
    if (r >= threshold) return r % n;
  }
}

double RngStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

}  // namespace salera
