// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "floq/common.hpp"
#include "floq/rng.hpp"

namespace floq {

/// Fully connected network: GELU on hidden layers, identity at the output.
/// weights[l] has shape layer_sizes[l+1] x layer_sizes[l].
struct DenseNetwork {
  std::vector<int> layer_sizes;
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }
  int num_layers() const { return static_cast<int>(weights.size()); }
};

/// Uniform init in +/- sqrt(1/fan_in) per layer, zero biases.
DenseNetwork make_network(const std::vector<int>& layer_sizes, RngStream& rng);
DenseNetwork make_zero_network(const std::vector<int>& layer_sizes);

/// Exact Gaussian-CDF GELU (no tanh approximation).
Scalar gelu(Scalar x);
Scalar gelu_grad(Scalar x);

Vector forward(const DenseNetwork& net, const Vector& input);
Matrix forward(const DenseNetwork& net, const Matrix& input);

struct ForwardCache {
  Matrix input;
  std::vector<Matrix> pre;   // pre-activations per layer
  std::vector<Matrix> post;  // activations per layer (last = output)
};
Matrix forward_cached(const DenseNetwork& net, const Matrix& input,
                      ForwardCache& cache);

struct NetGrads {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
};
NetGrads zero_grads(const DenseNetwork& net);

struct BackwardResult {
  NetGrads grads;
  Matrix input_grad;
};
/// Backprop from a cached forward pass.
BackwardResult backward(const DenseNetwork& net, const ForwardCache& cache,
                        const Matrix& output_grad);
/// Convenience form that recomputes the forward pass internally.
BackwardResult backward(const DenseNetwork& net, const Matrix& input,
                        const Matrix& output_grad);

struct AdamState {
  NetGrads m;
  NetGrads v;
  long step = 0;
  Scalar lr = 3e-4;
  Scalar beta1 = 0.9;
  Scalar beta2 = 0.999;
  Scalar epsilon = 1e-8;
};
AdamState make_adam(const DenseNetwork& net, Scalar lr);
/// Bias-corrected Adam update in place; increments the step counter.
void adam_step(DenseNetwork& params, const NetGrads& grads, AdamState& state);

/// Shadow copy updated as shadow = (1-tau)*shadow + tau*online.
struct EmaTracker {
  DenseNetwork shadow;
  Scalar tau = 0.005;
};
EmaTracker make_ema(const DenseNetwork& online, Scalar tau);
void ema_update(EmaTracker& tracker, const DenseNetwork& online);

// Checkpoint file: header line "FLOQNET1 <layer_sizes comma-separated> [role]"
// followed by raw little-endian 64-bit floats (row-major weights then bias,
// layer by layer).
void save_network(const DenseNetwork& net, const std::filesystem::path& path,
                  std::string_view role = {});
struct LoadedNetwork {
  DenseNetwork net;
  std::string role;
};
LoadedNetwork load_network(const std::filesystem::path& path);

/// Throws NumericalError if any entry is NaN or infinite.
void check_finite(const Matrix& values, const char* what);
void check_finite(Scalar value, const char* what);

bool same_shape(const DenseNetwork& a, const DenseNetwork& b);

}  // namespace floq
