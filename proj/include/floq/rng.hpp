// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string_view>

#include "floq/common.hpp"

namespace floq {

/// Counter-based random stream (SplitMix64 run in counter mode).
///
/// Every consumer derives its own stream from one experiment seed plus a
/// stream name ("module.purpose"), so draw sequences do not depend on how
/// calls from different consumers interleave.
class RngStream {
 public:
  RngStream() : RngStream(0, "default") {}
  RngStream(std::uint64_t seed, std::string_view name);

  std::uint64_t next_u64();

  /// Uniform in [0, 1).
  Scalar uniform();
  /// Uniform in [lo, hi).
  Scalar uniform(Scalar lo, Scalar hi);
  /// Standard normal via Box-Muller; consumes exactly two u64 draws.
  Scalar normal();
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_below(std::uint64_t n);

  Vector normal_vector(Eigen::Index n);
  void fill_normal(Eigen::Ref<Matrix> out);
  void fill_uniform(Eigen::Ref<RowVector> out, Scalar lo, Scalar hi);

  /// Number of u64 draws consumed so far (instrumentation hook).
  std::uint64_t draws() const { return counter_; }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace floq
