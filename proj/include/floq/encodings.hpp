// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "floq/common.hpp"

namespace floq {

/// Categorical histogram encoding of a scalar: a Gaussian of std sigma is
/// centered at the value, truncated to [v_min, v_max], discretized over
/// num_bins equal bins, and renormalized to a probability vector.
struct HlGaussEncoding {
  int num_bins = 0;
  Scalar v_min = 0.0;
  Scalar v_max = 0.0;
  Scalar sigma = 0.0;

  Scalar bin_width() const { return (v_max - v_min) / num_bins; }
  Scalar bin_center(int i) const { return v_min + (i + 0.5) * bin_width(); }
};

HlGaussEncoding make_hl_gauss(int num_bins, Scalar v_min, Scalar v_max,
                              Scalar sigma);

/// Probability vector of length num_bins; valid for any z, including values
/// outside the support (mass concentrates at the boundary bins).
Vector encode_interpolant(const HlGaussEncoding& enc, Scalar z);
void encode_interpolant_into(const HlGaussEncoding& enc, Scalar z,
                             Scalar* out);

/// Fraction of bins whose probability exceeds threshold.
Scalar coverage_fraction(const HlGaussEncoding& enc, Scalar z, Scalar threshold);

/// Ablation variant: z mapped linearly to [0,1] over the support, clipped.
Scalar encode_normalized_scalar(const HlGaussEncoding& enc, Scalar z);

/// Value clipped to the support widened by sigma_mult standard deviations.
/// Diagnostics-only helper; the loss path never clips.
Scalar clip_to_support(const HlGaussEncoding& enc, Scalar z,
                       Scalar sigma_mult = 3.0);

/// Time embedding with interleaved [sin(2*pi*f_k*t), cos(2*pi*f_k*t)] pairs.
struct FourierTimeEmbedding {
  int dimension = 0;
  std::vector<Scalar> frequencies;  // dimension/2 entries
};

/// Default geometric ladder f_k = 2^(k-2), k = 1..D/2 (0.5, 1, 2, 4, ...).
/// The half-period base frequency keeps t=0 and t=1 distinguishable.
FourierTimeEmbedding make_fourier_embedding(int dimension);
FourierTimeEmbedding make_fourier_embedding(std::vector<Scalar> frequencies);

/// Requires t in [0, 1].
Vector embed_time(const FourierTimeEmbedding& emb, Scalar t);
void embed_time_into(const FourierTimeEmbedding& emb, Scalar t, Scalar* out);

/// Ablation variant: the scalar itself, as a length-1 vector.
Vector embed_time_scalar(Scalar t);

/// Standard normal CDF.
Scalar normal_cdf(Scalar x);

}  // namespace floq
