#include "selfqa/rng.hpp"

#include <cmath>

namespace selfqa {

namespace {
constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

std::uint64_t mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}
}  // namespace

RngStream::RngStream(std::uint64_t seed) : key_(mix(seed + kGolden)) {}

RngStream RngStream::split(std::uint64_t stream_id) const {
  RngStream s(0);
  s.key_ = mix(key_ ^ mix(stream_id + 0x632be59bd9b4e019ull));
  s.counter_ = 0;
  return s;
}

std::uint64_t RngStream::next_u64() {
  ++counter_;
  return mix(key_ + kGolden * counter_);
}

double RngStream::uniform() {
  // 53-bit mantissa in [0,1); the +0.5 ulp shift keeps it strictly positive.
  double u = (next_u64() >> 11) * 0x1.0p-53;
  if (u <= 0.0) u = 0x1.0p-53;
  return u;
}

double RngStream::normal() {
  double u1 = uniform();
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
}

double RngStream::gumbel() {
  double u = uniform();
  if (u < 1e-12) u = 1e-12;
  if (u > 1.0 - 1e-12) u = 1.0 - 1e-12;
  return -std::log(-std::log(u));
}

std::uint64_t RngStream::below(std::uint64_t n) {
  // Modulo bias is negligible for the small n used here.
  return next_u64() % n;
}

}  // namespace selfqa
