// SPDX-License-Identifier: Apache-2.0
#include "floq/rng.hpp"

#include <cmath>

namespace floq {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

std::uint64_t mix64(std::uint64_t x) {
  x += kGolden;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::string_view name)
    : key_(mix64(mix64(seed) ^ fnv1a(name))) {}

std::uint64_t RngStream::next_u64() {
  ++counter_;
  return mix64(key_ + kGolden * counter_);
}

Scalar RngStream::uniform() {
  return static_cast<Scalar>(next_u64() >> 11) * 0x1.0p-53;
}

Scalar RngStream::uniform(Scalar lo, Scalar hi) {
  return lo + (hi - lo) * uniform();
}

Scalar RngStream::normal() {
  // 1 - u lies in (0, 1], keeping the log argument positive.
  const Scalar u1 = 1.0 - uniform();
  const Scalar u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::uint64_t RngStream::uniform_below(std::uint64_t n) {
  return static_cast<std::uint64_t>(
      (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
}

Vector RngStream::normal_vector(Eigen::Index n) {
  Vector out(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = normal();
  return out;
}

void RngStream::fill_normal(Eigen::Ref<Matrix> out) {
  for (Eigen::Index c = 0; c < out.cols(); ++c)
    for (Eigen::Index r = 0; r < out.rows(); ++r) out(r, c) = normal();
}

void RngStream::fill_uniform(Eigen::Ref<RowVector> out, Scalar lo, Scalar hi) {
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = uniform(lo, hi);
}

}  // namespace floq
