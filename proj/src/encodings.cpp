// SPDX-License-Identifier: Apache-2.0
#include "floq/encodings.hpp"

#include <algorithm>
#include <cmath>

namespace floq {

namespace {
constexpr Scalar kInvSqrt2 = 0.7071067811865475244;
}

Scalar normal_cdf(Scalar x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

HlGaussEncoding make_hl_gauss(int num_bins, Scalar v_min, Scalar v_max,
                              Scalar sigma) {
  require(num_bins >= 2, "HL-Gauss needs at least 2 bins");
  require(v_min < v_max, "HL-Gauss support must have v_min < v_max");
  require(sigma > 0.0, "HL-Gauss sigma must be positive");
  return HlGaussEncoding{num_bins, v_min, v_max, sigma};
}

void encode_interpolant_into(const HlGaussEncoding& enc, Scalar z, Scalar* out) {
  const int n = enc.num_bins;
  const Scalar dv = enc.bin_width();
  const Scalar inv_sigma = 1.0 / enc.sigma;
  Scalar prev = normal_cdf((enc.v_min - z) * inv_sigma);
  const Scalar first = prev;
  for (int i = 0; i < n; ++i) {
    const Scalar edge = enc.v_min + (i + 1) * dv;
    const Scalar cur = normal_cdf((edge - z) * inv_sigma);
    out[i] = cur - prev;
    prev = cur;
  }
  const Scalar total = prev - first;
  if (total > 1e-300) {
    const Scalar inv_total = 1.0 / total;
    for (int i = 0; i < n; ++i) out[i] *= inv_total;
  } else {
    // All edges saturate (sigma tiny or z far outside the support): collapse
    // the mass onto the nearest bin.
    int idx = static_cast<int>(std::floor((z - enc.v_min) / dv));
    idx = std::clamp(idx, 0, n - 1);
    std::fill(out, out + n, 0.0);
    out[idx] = 1.0;
  }
}

Vector encode_interpolant(const HlGaussEncoding& enc, Scalar z) {
  Vector out(enc.num_bins);
  encode_interpolant_into(enc, z, out.data());
  return out;
}

Scalar coverage_fraction(const HlGaussEncoding& enc, Scalar z, Scalar threshold) {
  require(threshold >= 0.0, "coverage threshold must be non-negative");
  const Vector p = encode_interpolant(enc, z);
  int count = 0;
  for (int i = 0; i < enc.num_bins; ++i)
    if (p[i] > threshold) ++count;
  return static_cast<Scalar>(count) / enc.num_bins;
}

Scalar encode_normalized_scalar(const HlGaussEncoding& enc, Scalar z) {
  const Scalar u = (z - enc.v_min) / (enc.v_max - enc.v_min);
  return std::clamp(u, 0.0, 1.0);
}

Scalar clip_to_support(const HlGaussEncoding& enc, Scalar z, Scalar sigma_mult) {
  const Scalar lo = enc.v_min - sigma_mult * enc.sigma;
  const Scalar hi = enc.v_max + sigma_mult * enc.sigma;
  return std::clamp(z, lo, hi);
}

FourierTimeEmbedding make_fourier_embedding(int dimension) {
  require(dimension >= 2 && dimension % 2 == 0,
          "Fourier embedding dimension must be a positive even integer");
  std::vector<Scalar> freqs(dimension / 2);
  Scalar f = 0.5;
  for (auto& v : freqs) {
    v = f;
    f *= 2.0;
  }
  return FourierTimeEmbedding{dimension, std::move(freqs)};
}

FourierTimeEmbedding make_fourier_embedding(std::vector<Scalar> frequencies) {
  require(!frequencies.empty(), "frequency list must be non-empty");
  for (Scalar f : frequencies) require(f > 0.0, "frequencies must be positive");
  const int dim = static_cast<int>(frequencies.size()) * 2;
  return FourierTimeEmbedding{dim, std::move(frequencies)};
}

void embed_time_into(const FourierTimeEmbedding& emb, Scalar t, Scalar* out) {
  require(t >= 0.0 && t <= 1.0, "time must lie in [0, 1]");
  for (std::size_t k = 0; k < emb.frequencies.size(); ++k) {
    const Scalar w = 2.0 * M_PI * emb.frequencies[k] * t;
    out[2 * k] = std::sin(w);
    out[2 * k + 1] = std::cos(w);
  }
}

Vector embed_time(const FourierTimeEmbedding& emb, Scalar t) {
  Vector out(emb.dimension);
  embed_time_into(emb, t, out.data());
  return out;
}

Vector embed_time_scalar(Scalar t) {
  Vector out(1);
  out[0] = t;
  return out;
}

}  // namespace floq
