// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "floq/nn.hpp"

using namespace floq;

namespace {

/// Straight-line re-implementation of the forward arithmetic, kept
/// independent of the library path it checks.
Vector reference_forward(const DenseNetwork& net, const Vector& input) {
  Vector h = input;
  for (int l = 0; l < net.num_layers(); ++l) {
    Vector z = Vector::Zero(net.layer_sizes[l + 1]);
    for (int r = 0; r < z.size(); ++r) {
      double acc = net.biases[l][r];
      for (int c = 0; c < h.size(); ++c) acc += net.weights[l](r, c) * h[c];
      z[r] = acc;
    }
    if (l + 1 < net.num_layers())
      for (int r = 0; r < z.size(); ++r)
        z[r] = 0.5 * z[r] * (1.0 + std::erf(z[r] / std::sqrt(2.0)));
    h = z;
  }
  return h;
}

Scalar loss_of(const DenseNetwork& net, const Matrix& input,
               const Matrix& cotangent) {
  return (forward(net, input).array() * cotangent.array()).sum();
}

}  // namespace

TEST_CASE("zero parameters map any input to zero") {
  const DenseNetwork net = make_zero_network({3, 5, 2});
  Vector in(3);
  in << 1.0, -2.0, 0.5;
  CHECK(forward(net, in).isZero(0.0));
}

TEST_CASE("identity single layer reproduces its input") {
  DenseNetwork net = make_zero_network({2, 2});
  net.weights[0] = Matrix::Identity(2, 2);
  Vector in(2);
  in << 1.0, 2.0;
  const Vector out = forward(net, in);
  CHECK(out[0] == 1.0);
  CHECK(out[1] == 2.0);
}

TEST_CASE("two-layer GELU net matches the duplicate-arithmetic oracle") {
  RngStream rng(11, "test.init");
  const DenseNetwork net = make_network({1, 8, 8, 1}, rng);
  Vector in(1);
  in << 1.0;
  const Vector got = forward(net, in);
  const Vector want = reference_forward(net, in);
  CHECK(std::abs(got[0] - want[0]) < 1e-12);
}

TEST_CASE("forward rejects dimension mismatches") {
  const DenseNetwork net = make_zero_network({3, 2});
  Vector in(2);
  in << 1.0, 2.0;
  CHECK_THROWS_AS((void)forward(net, in), std::invalid_argument);
}

TEST_CASE("linear layer gradient is the input") {
  DenseNetwork net = make_zero_network({1, 1});
  Matrix in(1, 1), g(1, 1);
  in(0, 0) = 3.0;
  g(0, 0) = 1.0;
  const BackwardResult res = backward(net, in, g);
  CHECK(res.grads.weights[0](0, 0) == 3.0);
  CHECK(res.grads.biases[0][0] == 1.0);
}

TEST_CASE("zero cotangent gives zero gradients") {
  RngStream rng(12, "test.init");
  const DenseNetwork net = make_network({3, 6, 2}, rng);
  Matrix in(3, 4);
  in.setRandom();
  const BackwardResult res = backward(net, in, Matrix::Zero(2, 4));
  for (const Matrix& g : res.grads.weights) CHECK(g.isZero(0.0));
  CHECK(res.input_grad.isZero(0.0));
}

TEST_CASE("backward matches central finite differences") {
  // randomly seeded nets up to 3 layers x 16 units, 100+ probed components
  RngStream rng(13, "test.init");
  RngStream pick(13, "test.pick");
  const std::vector<std::vector<int>> shapes = {
      {4, 16, 1}, {3, 12, 8, 2}, {2, 16, 16, 1}};
  int probes = 0;
  for (const auto& shape : shapes) {
    DenseNetwork net = make_network(shape, rng);
    Matrix in(shape.front(), 3);
    for (Eigen::Index i = 0; i < in.size(); ++i)
      in.data()[i] = rng.uniform(-1.0, 1.0);
    Matrix cot(shape.back(), 3);
    for (Eigen::Index i = 0; i < cot.size(); ++i)
      cot.data()[i] = rng.uniform(-1.0, 1.0);

    const BackwardResult res = backward(net, in, cot);
    const Scalar h = 1e-5;
    for (int rep = 0; rep < 40; ++rep) {
      const int layer = static_cast<int>(pick.uniform_below(net.num_layers()));
      Matrix& w = net.weights[layer];
      const int r = static_cast<int>(pick.uniform_below(w.rows()));
      const int c = static_cast<int>(pick.uniform_below(w.cols()));
      const Scalar keep = w(r, c);
      w(r, c) = keep + h;
      const Scalar up = loss_of(net, in, cot);
      w(r, c) = keep - h;
      const Scalar down = loss_of(net, in, cot);
      w(r, c) = keep;
      const Scalar fd = (up - down) / (2 * h);
      const Scalar an = res.grads.weights[layer](r, c);
      CHECK(std::abs(an - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
      ++probes;
    }
  }
  CHECK(probes >= 100);
}

TEST_CASE("adam leaves parameters alone under zero gradients") {
  RngStream rng(14, "test.init");
  DenseNetwork net = make_network({2, 4, 1}, rng);
  const DenseNetwork before = net;
  AdamState st = make_adam(net, 1e-3);
  adam_step(net, zero_grads(net), st);
  for (int l = 0; l < net.num_layers(); ++l)
    CHECK((net.weights[l] - before.weights[l]).cwiseAbs().maxCoeff() == 0.0);
  CHECK(st.step == 1);
}

TEST_CASE("first adam step moves a scalar by about lr") {
  DenseNetwork net = make_zero_network({1, 1});
  AdamState st = make_adam(net, 1e-3);
  NetGrads g = zero_grads(net);
  g.weights[0](0, 0) = 1.0;
  adam_step(net, g, st);
  // bias-corrected first step: -lr / (1 + eps)
  CHECK(std::abs(net.weights[0](0, 0) + 1e-3) < 1e-9);
}

TEST_CASE("adam step counter advances by one per call") {
  DenseNetwork net = make_zero_network({1, 1});
  AdamState st = make_adam(net, 1e-3);
  NetGrads g = zero_grads(net);
  g.weights[0](0, 0) = 0.5;
  adam_step(net, g, st);
  CHECK(st.step == 1);
  adam_step(net, g, st);
  CHECK(st.step == 2);
}

TEST_CASE("ema coefficient limits") {
  RngStream rng(15, "test.init");
  const DenseNetwork online = make_network({2, 3, 1}, rng);
  DenseNetwork other = make_zero_network({2, 3, 1});

  EmaTracker copy_all = make_ema(other, 1.0);
  ema_update(copy_all, online);
  for (int l = 0; l < online.num_layers(); ++l)
    CHECK((copy_all.shadow.weights[l] - online.weights[l]).norm() == 0.0);

  EmaTracker frozen = make_ema(other, 0.0);
  ema_update(frozen, online);
  for (int l = 0; l < online.num_layers(); ++l)
    CHECK(frozen.shadow.weights[l].isZero(0.0));
}

TEST_CASE("ema formula at tau 0.005") {
  DenseNetwork shadow = make_zero_network({1, 1});
  DenseNetwork online = make_zero_network({1, 1});
  online.weights[0](0, 0) = 1.0;
  EmaTracker tracker = make_ema(shadow, 0.005);
  ema_update(tracker, online);
  CHECK(tracker.shadow.weights[0](0, 0) == doctest::Approx(0.005).epsilon(1e-12));
}

TEST_CASE("ema converges geometrically toward fixed online parameters") {
  RngStream rng(16, "test.init");
  const DenseNetwork online = make_network({2, 4, 1}, rng);
  EmaTracker tracker = make_ema(make_zero_network({2, 4, 1}), 0.05);
  Scalar prev_gap = 0.0;
  for (int l = 0; l < online.num_layers(); ++l)
    prev_gap = std::max(prev_gap,
                        (tracker.shadow.weights[l] - online.weights[l])
                            .cwiseAbs()
                            .maxCoeff());
  for (int i = 0; i < 50; ++i) {
    ema_update(tracker, online);
    Scalar gap = 0.0;
    for (int l = 0; l < online.num_layers(); ++l)
      gap = std::max(gap, (tracker.shadow.weights[l] - online.weights[l])
                              .cwiseAbs()
                              .maxCoeff());
    CHECK(gap <= prev_gap * 0.95 + 1e-15);  // ratio (1 - tau)
    prev_gap = gap;
  }
}

TEST_CASE("checkpoint round-trip is bit-exact and carries the role tag") {
  RngStream rng(17, "test.init");
  const DenseNetwork net = make_network({3, 7, 2}, rng);
  const auto path = std::filesystem::temp_directory_path() / "floq_net_test.net";
  save_network(net, path, "velocity");
  const LoadedNetwork loaded = load_network(path);
  CHECK(loaded.role == "velocity");
  REQUIRE(loaded.net.layer_sizes == net.layer_sizes);
  for (int l = 0; l < net.num_layers(); ++l) {
    CHECK((loaded.net.weights[l] - net.weights[l]).cwiseAbs().maxCoeff() == 0.0);
    CHECK((loaded.net.biases[l] - net.biases[l]).cwiseAbs().maxCoeff() == 0.0);
  }
  std::filesystem::remove(path);
}

TEST_CASE("corrupted checkpoint header is rejected") {
  const auto path = std::filesystem::temp_directory_path() / "floq_bad.net";
  {
    std::ofstream out(path, std::ios::binary);
    out << "FLOQNETX 3,2\n";
  }
  CHECK_THROWS_AS((void)load_network(path), ConfigError);
  {
    std::ofstream out(path, std::ios::binary);
    out << "FLOQNET1 3,2\n";  // header fine, payload missing
  }
  CHECK_THROWS_AS((void)load_network(path), ConfigError);
  std::filesystem::remove(path);
}
