// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "floq/encodings.hpp"
#include "floq/rng.hpp"

using namespace floq;

namespace {

// Test-side normal CDF built on an independent erf: Abramowitz-Stegun 7.1.26
// style series/continued-fraction evaluation in long double.
long double oracle_erf(long double x) {
  const bool neg = x < 0;
  x = std::fabs(x);
  long double result;
  if (x < 2.0L) {
    // power series erf(x) = 2/sqrt(pi) * sum (-1)^n x^(2n+1) / (n! (2n+1))
    long double term = x, sum = x;
    for (int n = 1; n < 200; ++n) {
      term *= -x * x / n;
      sum += term / (2 * n + 1);
      if (std::fabs(term) < 1e-25L) break;
    }
    result = 2.0L / std::sqrt(M_PIl) * sum;
  } else {
    // continued fraction for erfc
    long double cf = 0.0L;
    for (int n = 60; n >= 1; --n) cf = (n / 2.0L) / (x + cf);
    const long double erfc =
        std::exp(-x * x) / std::sqrt(M_PIl) / (x + cf);
    result = 1.0L - erfc;
  }
  return neg ? -result : result;
}

long double oracle_phi(long double x) {
  return 0.5L * (1.0L + oracle_erf(x / std::sqrt(2.0L)));
}

Vector oracle_encode(const HlGaussEncoding& enc, Scalar z) {
  Vector p(enc.num_bins);
  const long double dv =
      (static_cast<long double>(enc.v_max) - enc.v_min) / enc.num_bins;
  long double total = 0.0L;
  for (int i = 0; i < enc.num_bins; ++i) {
    const long double lo = enc.v_min + i * dv;
    const long double hi = enc.v_min + (i + 1) * dv;
    const long double mass = oracle_phi((hi - z) / enc.sigma) -
                             oracle_phi((lo - z) / enc.sigma);
    p[i] = static_cast<Scalar>(mass);
    total += mass;
  }
  if (total > 0) p /= static_cast<Scalar>(total);
  return p;
}

Scalar expected_bin_center(const HlGaussEncoding& enc, Scalar z) {
  const Vector p = encode_interpolant(enc, z);
  Scalar mean = 0.0;
  for (int i = 0; i < enc.num_bins; ++i) mean += p[i] * enc.bin_center(i);
  return mean;
}

}  // namespace

TEST_CASE("two symmetric bins split mass evenly") {
  const auto enc = make_hl_gauss(2, 0.0, 1.0, 0.25);
  const Vector p = encode_interpolant(enc, 0.5);
  CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("off-center mass matches the Gaussian-CDF oracle") {
  const auto enc = make_hl_gauss(2, 0.0, 1.0, 0.25);
  const Vector p = encode_interpolant(enc, 0.25);
  CHECK(p[0] == doctest::Approx(0.8127).epsilon(1e-3));
  const Vector want = oracle_encode(enc, 0.25);
  CHECK(std::abs(p[0] - want[0]) < 1e-9);
  CHECK(std::abs(p[1] - want[1]) < 1e-9);
}

TEST_CASE("tiny sigma collapses to the containing bin") {
  const auto enc = make_hl_gauss(10, 0.0, 1.0, 1e-9);
  const Scalar z = enc.bin_center(3);
  const Vector p = encode_interpolant(enc, z);
  CHECK(p[3] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("encoding parameters are validated") {
  CHECK_THROWS_AS((void)make_hl_gauss(1, 0.0, 1.0, 0.1), std::invalid_argument);
  CHECK_THROWS_AS((void)make_hl_gauss(4, 0.0, 1.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS((void)make_hl_gauss(4, 1.0, 0.0, 0.1), std::invalid_argument);
}

TEST_CASE("partition of unity holds for 1000 random probes") {
  RngStream rng(21, "test.probes");
  const auto enc = make_hl_gauss(33, -2.0, 3.0, 0.5);
  for (int i = 0; i < 1000; ++i) {
    // include z far outside the support and random sigmas
    const Scalar z = rng.uniform(-40.0, 40.0);
    const Scalar sigma = std::pow(10.0, rng.uniform(-6.0, 1.0));
    const auto e = make_hl_gauss(33, -2.0, 3.0, sigma);
    const Vector p = encode_interpolant(e, z);
    CHECK(std::abs(p.sum() - 1.0) < 1e-9);
    CHECK(p.minCoeff() >= 0.0);
    (void)enc;
  }
}

TEST_CASE("expected bin center is monotone in z") {
  const auto enc = make_hl_gauss(21, -1.0, 1.0, 0.3);
  Scalar prev = expected_bin_center(enc, -3.0);
  for (Scalar z = -2.9; z <= 3.0; z += 0.1) {
    const Scalar cur = expected_bin_center(enc, z);
    CHECK(cur >= prev - 1e-12);
    prev = cur;
  }
}

TEST_CASE("encoding is Lipschitz in z with constant scaling as 1/sigma") {
  RngStream rng(22, "test.lipschitz");
  for (Scalar sigma : {0.05, 0.2, 0.8}) {
    const auto enc = make_hl_gauss(33, -1.0, 1.0, sigma);
    const Scalar h = 1e-3 * sigma;
    for (int i = 0; i < 50; ++i) {
      const Scalar z = rng.uniform(-1.2, 1.2);
      const Vector a = encode_interpolant(enc, z);
      const Vector b = encode_interpolant(enc, z + h);
      CHECK((a - b).lpNorm<1>() <= 3.0 * h / sigma);
    }
  }
}

TEST_CASE("coverage fraction limits") {
  // near-uniform limit: sigma huge relative to the support
  const auto wide = make_hl_gauss(17, 0.0, 1.0, 100.0);
  CHECK(coverage_fraction(wide, 0.3, 0.0) == doctest::Approx(1.0));
  // delta limit
  const auto narrow = make_hl_gauss(17, 0.0, 1.0, 1e-12);
  CHECK(coverage_fraction(narrow, narrow.bin_center(5), 0.0) ==
        doctest::Approx(1.0 / 17));
}

TEST_CASE("sigma=16 over the chain value range covers 80% of 65 bins") {
  // chain(3, gamma=0.9): value range [0, 10], support widened by 5%
  const auto enc = make_hl_gauss(65, -0.5, 10.5, 16.0);
  CHECK(coverage_fraction(enc, 0.0, 1e-6) >= 0.8);
}

TEST_CASE("fourier embedding basics") {
  const auto emb = make_fourier_embedding(8);
  REQUIRE(emb.frequencies.size() == 4);
  CHECK(emb.frequencies[0] == 0.5);
  CHECK(emb.frequencies[1] == 1.0);
  CHECK(emb.frequencies[2] == 2.0);

  const Vector at0 = embed_time(emb, 0.0);
  for (int k = 0; k < 4; ++k) {
    CHECK(at0[2 * k] == 0.0);       // sin
    CHECK(at0[2 * k + 1] == 1.0);   // cos
  }
  for (int i = 0; i < at0.size(); ++i) {
    CHECK(at0[i] <= 1.0);
    CHECK(at0[i] >= -1.0);
  }
}

TEST_CASE("unit frequency at quarter period") {
  const auto emb = make_fourier_embedding(std::vector<Scalar>{1.0});
  const Vector v = embed_time(emb, 0.25);
  CHECK(v[0] == doctest::Approx(1.0).epsilon(1e-15));  // sin(pi/2)
  CHECK(std::abs(v[1]) < 1e-15);                       // cos(pi/2)
}

TEST_CASE("default 64-dimensional embedding has length 64") {
  const auto emb = make_fourier_embedding(64);
  CHECK(embed_time(emb, 0.37).size() == 64);
}

TEST_CASE("time outside the unit interval is rejected") {
  const auto emb = make_fourier_embedding(4);
  CHECK_THROWS_AS((void)embed_time(emb, -0.1), std::invalid_argument);
  CHECK_THROWS_AS((void)embed_time(emb, 1.1), std::invalid_argument);
}

TEST_CASE("grid embeddings are pairwise distinct for K up to 16") {
  const auto emb = make_fourier_embedding(64);
  for (int K = 1; K <= 16; ++K) {
    std::vector<Vector> vecs;
    for (int i = 0; i <= K; ++i)
      vecs.push_back(embed_time(emb, static_cast<Scalar>(i) / K));
    for (std::size_t i = 0; i < vecs.size(); ++i)
      for (std::size_t j = i + 1; j < vecs.size(); ++j)
        CHECK((vecs[i] - vecs[j]).norm() > 1e-6);
  }
}

TEST_CASE("scalar time embedding is the identity map") {
  CHECK(embed_time_scalar(0.0)[0] == 0.0);
  CHECK(embed_time_scalar(1.0)[0] == 1.0);
  CHECK(embed_time_scalar(0.5)[0] == 0.5);
  CHECK(embed_time_scalar(0.5).size() == 1);
}

TEST_CASE("normalized scalar variant maps support to [0,1] and clips") {
  const auto enc = make_hl_gauss(9, -2.0, 2.0, 0.5);
  CHECK(encode_normalized_scalar(enc, -2.0) == 0.0);
  CHECK(encode_normalized_scalar(enc, 2.0) == 1.0);
  CHECK(encode_normalized_scalar(enc, 0.0) == doctest::Approx(0.5));
  CHECK(encode_normalized_scalar(enc, -5.0) == 0.0);
  CHECK(encode_normalized_scalar(enc, 5.0) == 1.0);
}
