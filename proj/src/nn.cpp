// SPDX-License-Identifier: Apache-2.0
#include "floq/nn.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace floq {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace {

constexpr Scalar kInvSqrt2 = 0.7071067811865475244;
constexpr Scalar kInvSqrt2Pi = 0.3989422804014326779;

void validate_sizes(const std::vector<int>& layer_sizes) {
  require(layer_sizes.size() >= 2, "network needs at least input and output sizes");
  for (int s : layer_sizes) require(s > 0, "layer sizes must be positive");
}

void apply_gelu(Matrix& x) {
  Scalar* p = x.data();
  const Eigen::Index n = x.size();
  for (Eigen::Index i = 0; i < n; ++i) p[i] = gelu(p[i]);
}

}  // namespace

Scalar gelu(Scalar x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

Scalar gelu_grad(Scalar x) {
  const Scalar cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  const Scalar pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
  return cdf + x * pdf;
}

DenseNetwork make_network(const std::vector<int>& layer_sizes, RngStream& rng) {
  validate_sizes(layer_sizes);
  DenseNetwork net;
  net.layer_sizes = layer_sizes;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const int fan_in = layer_sizes[l];
    const int fan_out = layer_sizes[l + 1];
    const Scalar bound = std::sqrt(1.0 / fan_in);
    Matrix w(fan_out, fan_in);
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c)
        w(r, c) = rng.uniform(-bound, bound);
    net.weights.push_back(std::move(w));
    net.biases.push_back(Vector::Zero(fan_out));
  }
  return net;
}

DenseNetwork make_zero_network(const std::vector<int>& layer_sizes) {
  validate_sizes(layer_sizes);
  DenseNetwork net;
  net.layer_sizes = layer_sizes;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    net.weights.push_back(Matrix::Zero(layer_sizes[l + 1], layer_sizes[l]));
    net.biases.push_back(Vector::Zero(layer_sizes[l + 1]));
  }
  return net;
}

Vector forward(const DenseNetwork& net, const Vector& input) {
  return forward(net, Matrix(input)).col(0);
}

Matrix forward(const DenseNetwork& net, const Matrix& input) {
  require(input.rows() == net.input_dim(), "forward: input dimension mismatch");
  Matrix h = input;
  const int last = net.num_layers() - 1;
  for (int l = 0; l <= last; ++l) {
    Matrix z = net.weights[l] * h;
    z.colwise() += net.biases[l];
    if (l < last) apply_gelu(z);
    h = std::move(z);
  }
  check_finite(h, "forward output");
  return h;
}

Matrix forward_cached(const DenseNetwork& net, const Matrix& input,
                      ForwardCache& cache) {
  require(input.rows() == net.input_dim(), "forward: input dimension mismatch");
  cache.input = input;
  cache.pre.assign(net.num_layers(), Matrix());
  cache.post.assign(net.num_layers(), Matrix());
  const int last = net.num_layers() - 1;
  const Matrix* h = &cache.input;
  for (int l = 0; l <= last; ++l) {
    Matrix z = net.weights[l] * (*h);
    z.colwise() += net.biases[l];
    cache.pre[l] = z;
    if (l < last) apply_gelu(z);
    cache.post[l] = std::move(z);
    h = &cache.post[l];
  }
  return cache.post[last];
}

NetGrads zero_grads(const DenseNetwork& net) {
  NetGrads g;
  for (int l = 0; l < net.num_layers(); ++l) {
    g.weights.push_back(Matrix::Zero(net.weights[l].rows(), net.weights[l].cols()));
    g.biases.push_back(Vector::Zero(net.biases[l].size()));
  }
  return g;
}

BackwardResult backward(const DenseNetwork& net, const ForwardCache& cache,
                        const Matrix& output_grad) {
  const int last = net.num_layers() - 1;
  require(output_grad.rows() == net.output_dim() &&
              output_grad.cols() == cache.input.cols(),
          "backward: cotangent shape mismatch");
  BackwardResult res;
  res.grads.weights.resize(net.num_layers());
  res.grads.biases.resize(net.num_layers());

  Matrix delta = output_grad;  // dL/d(pre activation), output layer is identity
  for (int l = last; l >= 0; --l) {
    if (l < last) {
      const Matrix& z = cache.pre[l];
      for (Eigen::Index i = 0; i < delta.size(); ++i)
        delta.data()[i] *= gelu_grad(z.data()[i]);
    }
    const Matrix& below = (l == 0) ? cache.input : cache.post[l - 1];
    res.grads.weights[l].noalias() = delta * below.transpose();
    res.grads.biases[l] = delta.rowwise().sum();
    if (l > 0)
      delta = net.weights[l].transpose() * delta;
    else
      res.input_grad.noalias() = net.weights[0].transpose() * delta;
  }
  for (const Matrix& g : res.grads.weights) check_finite(g, "weight gradient");
  return res;
}

BackwardResult backward(const DenseNetwork& net, const Matrix& input,
                        const Matrix& output_grad) {
  ForwardCache cache;
  forward_cached(net, input, cache);
  return backward(net, cache, output_grad);
}

AdamState make_adam(const DenseNetwork& net, Scalar lr) {
  require(lr > 0, "learning rate must be positive");
  AdamState st;
  st.m = zero_grads(net);
  st.v = zero_grads(net);
  st.lr = lr;
  return st;
}

void adam_step(DenseNetwork& params, const NetGrads& grads, AdamState& state) {
  require(grads.weights.size() == params.weights.size(),
          "adam_step: gradient shape mismatch");
  state.step += 1;
  const Scalar bc1 = 1.0 - std::pow(state.beta1, static_cast<Scalar>(state.step));
  const Scalar bc2 = 1.0 - std::pow(state.beta2, static_cast<Scalar>(state.step));
  const Scalar b1 = state.beta1, b2 = state.beta2;
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
      m = b1 * m + (1.0 - b1) * g;
      v.array() = b2 * v.array() + (1.0 - b2) * g.array().square();
      p.array() -= state.lr * (m.array() / bc1) /
                   ((v.array() / bc2).sqrt() + state.epsilon);
    };
    update(params.weights[l], grads.weights[l], state.m.weights[l],
           state.v.weights[l]);
    update(params.biases[l], grads.biases[l], state.m.biases[l],
           state.v.biases[l]);
    check_finite(params.weights[l], "adam-updated weights");
  }
}

EmaTracker make_ema(const DenseNetwork& online, Scalar tau) {
  require(tau >= 0.0 && tau <= 1.0, "EMA coefficient must lie in [0, 1]");
  return EmaTracker{online, tau};
}

void ema_update(EmaTracker& tracker, const DenseNetwork& online) {
  require(same_shape(tracker.shadow, online), "ema_update: shape mismatch");
  const Scalar tau = tracker.tau;
  for (std::size_t l = 0; l < online.weights.size(); ++l) {
    tracker.shadow.weights[l] =
        (1.0 - tau) * tracker.shadow.weights[l] + tau * online.weights[l];
    tracker.shadow.biases[l] =
        (1.0 - tau) * tracker.shadow.biases[l] + tau * online.biases[l];
  }
}

bool same_shape(const DenseNetwork& a, const DenseNetwork& b) {
  return a.layer_sizes == b.layer_sizes;
}

void save_network(const DenseNetwork& net, const std::filesystem::path& path,
                  std::string_view role) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open checkpoint for writing: " + path.string());
  std::string header = "FLOQNET1 ";
  for (std::size_t i = 0; i < net.layer_sizes.size(); ++i) {
    if (i) header += ',';
    header += std::to_string(net.layer_sizes[i]);
  }
  if (!role.empty()) {
    header += ' ';
    header += role;
  }
  header += '\n';
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (int l = 0; l < net.num_layers(); ++l) {
    // row-major weight block, then bias
    for (Eigen::Index r = 0; r < net.weights[l].rows(); ++r)
      for (Eigen::Index c = 0; c < net.weights[l].cols(); ++c) {
        const Scalar v = net.weights[l](r, c);
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
      }
    out.write(reinterpret_cast<const char*>(net.biases[l].data()),
              static_cast<std::streamsize>(sizeof(Scalar) * net.biases[l].size()));
  }
  if (!out) throw ConfigError("checkpoint write failed: " + path.string());
}

LoadedNetwork load_network(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint: " + path.string());
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  std::string tag, sizes, role;
  hs >> tag >> sizes;
  hs >> role;  // optional
  if (tag != "FLOQNET1" || sizes.empty())
    throw ConfigError("bad checkpoint header in " + path.string() + ": \"" +
                      header + "\"");
  std::vector<int> layer_sizes;
  std::istringstream ss(sizes);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    int v = 0;
    try {
      v = std::stoi(tok);
    } catch (const std::exception&) {
      throw ConfigError("bad layer size \"" + tok + "\" in " + path.string());
    }
    if (v <= 0) throw ConfigError("non-positive layer size in " + path.string());
    layer_sizes.push_back(v);
  }
  if (layer_sizes.size() < 2)
    throw ConfigError("checkpoint header lists fewer than two layers: " +
                      path.string());

  LoadedNetwork out;
  out.role = role;
  out.net.layer_sizes = layer_sizes;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    Matrix w(layer_sizes[l + 1], layer_sizes[l]);
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        Scalar v;
        if (!in.read(reinterpret_cast<char*>(&v), sizeof(v)))
          throw ConfigError("truncated checkpoint: " + path.string());
        w(r, c) = v;
      }
    Vector b(layer_sizes[l + 1]);
    if (!in.read(reinterpret_cast<char*>(b.data()),
                 static_cast<std::streamsize>(sizeof(Scalar) * b.size())))
      throw ConfigError("truncated checkpoint: " + path.string());
    out.net.weights.push_back(std::move(w));
    out.net.biases.push_back(std::move(b));
  }
  char extra;
  if (in.read(&extra, 1))
    throw ConfigError("trailing bytes after parameters: " + path.string());
  return out;
}

void check_finite(const Matrix& values, const char* what) {
  if (!values.allFinite())
    throw NumericalError(std::string("non-finite values in ") + what);
}

void check_finite(Scalar value, const char* what) {
  if (!std::isfinite(value))
    throw NumericalError(std::string("non-finite value in ") + what);
}

}  // namespace floq
