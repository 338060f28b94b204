#pragma once

// Dense feedforward networks with exact reverse-mode gradients, Adam and
// Polyak averaging. Samples are columns: a batch of B inputs is an
// (in_dim x B) matrix and produces an (out_dim x B) matrix.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cgm/error.hpp"
#include "cgm/rng.hpp"

namespace cgm::nn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Activation : std::uint8_t { relu = 0, tanh = 1, linear = 2 };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::linear: return "linear";
  }
  return "?";
}

inline Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "linear") return Activation::linear;
  throw ConfigError("unknown activation '" + std::string(s) + "'");
}

struct Layer {
  Matrix weight;  // out x in
  Vector bias;    // out
  Activation activation = Activation::linear;

  bool operator==(const Layer& o) const {
    return activation == o.activation && weight.rows() == o.weight.rows() && weight.cols() == o.weight.cols() &&
           bias.size() == o.bias.size() && weight == o.weight && bias == o.bias;
  }
};

/// Parameter-shaped storage: gradients, Adam moments.
struct ParameterSet {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  bool operator==(const ParameterSet& o) const {
    if (weights.size() != o.weights.size() || biases.size() != o.biases.size()) return false;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (weights[i].rows() != o.weights[i].rows() || weights[i].cols() != o.weights[i].cols() ||
          weights[i] != o.weights[i])
        return false;
      if (biases[i].size() != o.biases[i].size() || biases[i] != o.biases[i]) return false;
    }
    return true;
  }

  void set_zero() {
    for (auto& w : weights) w.setZero();
    for (auto& b : biases) b.setZero();
  }

  bool all_finite() const {
    for (const auto& w : weights)
      if (!w.allFinite()) return false;
    for (const auto& b : biases)
      if (!b.allFinite()) return false;
    return true;
  }

  ParameterSet& operator+=(const ParameterSet& other) {
    detail::require<ShapeError>(weights.size() == other.weights.size(),
                                "parameter set layer count mismatch");
    for (std::size_t i = 0; i < weights.size(); ++i) {
      weights[i] += other.weights[i];
      biases[i] += other.biases[i];
    }
    return *this;
  }

  ParameterSet& operator*=(double s) {
    for (auto& w : weights) w *= s;
    for (auto& b : biases) b *= s;
    return *this;
  }
};

class Network {
 public:
  Network() = default;
  explicit Network(std::vector<Layer> layers) : layers_(std::move(layers)) { check_shapes(); }

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& mutable_layers() { return layers_; }

  std::size_t num_layers() const { return layers_.size(); }
  Eigen::Index input_size() const { return layers_.empty() ? 0 : layers_.front().weight.cols(); }
  Eigen::Index output_size() const { return layers_.empty() ? 0 : layers_.back().weight.rows(); }

  std::vector<int> layer_sizes() const {
    std::vector<int> sizes;
    if (layers_.empty()) return sizes;
    sizes.push_back(static_cast<int>(input_size()));
    for (const auto& l : layers_) sizes.push_back(static_cast<int>(l.weight.rows()));
    return sizes;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }

  bool same_architecture(const Network& other) const {
    if (layers_.size() != other.layers_.size()) return false;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (layers_[i].weight.rows() != other.layers_[i].weight.rows() ||
          layers_[i].weight.cols() != other.layers_[i].weight.cols() ||
          layers_[i].activation != other.layers_[i].activation)
        return false;
    }
    return true;
  }

  bool all_finite() const {
    for (const auto& l : layers_)
      if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    return true;
  }

  /// Zero-valued parameter set with this network's shapes.
  ParameterSet zeros_like() const {
    ParameterSet p;
    for (const auto& l : layers_) {
      p.weights.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
      p.biases.push_back(Vector::Zero(l.bias.size()));
    }
    return p;
  }

  bool operator==(const Network&) const = default;

 private:
  void check_shapes() const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      detail::require<ShapeError>(layers_[i].bias.size() == layers_[i].weight.rows(),
                                  "bias length must equal layer output size");
      if (i + 1 < layers_.size())
        detail::require<ShapeError>(layers_[i].weight.rows() == layers_[i + 1].weight.cols(),
                                    "consecutive layer shapes are incompatible");
    }
  }

  std::vector<Layer> layers_;
};

/// Weights and biases uniform in +-1/sqrt(fan_in), drawn layer by layer,
/// weights row-major before biases.
inline Network init_network(std::span<const int> layer_sizes, std::span<const Activation> activations,
                            std::uint64_t seed) {
  detail::require<ConfigError>(layer_sizes.size() >= 2, "network needs at least two layer sizes");
  detail::require<ConfigError>(activations.size() == layer_sizes.size() - 1,
                               "need exactly one activation per layer");
  for (int s : layer_sizes) detail::require<ConfigError>(s > 0, "layer sizes must be positive");

  Rng rng(seed);
  std::vector<Layer> layers;
  for (std::size_t i = 0; i + 1 < layer_sizes.size(); ++i) {
    const int in = layer_sizes[i];
    const int out = layer_sizes[i + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Layer layer{Matrix(out, in), Vector(out), activations[i]};
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) layer.weight(r, c) = rng.uniform(-bound, bound);
    for (int r = 0; r < out; ++r) layer.bias(r) = rng.uniform(-bound, bound);
    layers.push_back(std::move(layer));
  }
  return Network(std::move(layers));
}

inline Network init_network(std::initializer_list<int> sizes, std::initializer_list<Activation> acts,
                            std::uint64_t seed) {
  return init_network(std::span<const int>(sizes.begin(), sizes.size()),
                      std::span<const Activation>(acts.begin(), acts.size()), seed);
}

/// Hidden layers use relu, output layer uses `output_activation`.
inline Network init_mlp(int in, std::span<const int> hidden, int out, Activation output_activation,
                        std::uint64_t seed) {
  std::vector<int> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  std::vector<Activation> acts(hidden.size(), Activation::relu);
  acts.push_back(output_activation);
  return init_network(sizes, acts, seed);
}

namespace kernel {

inline void activate(Activation a, Matrix& z) {
  switch (a) {
    case Activation::relu: z = z.cwiseMax(0.0); break;
    case Activation::tanh: z = z.array().tanh().matrix(); break;
    case Activation::linear: break;
  }
}

/// Multiplies `grad` in place by the activation derivative, given the
/// post-activation output `y`.
inline void activation_backward(Activation a, const Matrix& y, Matrix& grad) {
  switch (a) {
    case Activation::relu: grad = (y.array() > 0.0).select(grad, 0.0); break;
    case Activation::tanh: grad = (grad.array() * (1.0 - y.array().square())).matrix(); break;
    case Activation::linear: break;
  }
}

/// Returns every layer's output; entry 0 is the input itself.
inline std::vector<Matrix> forward_all(const Network& net, const Matrix& input) {
  detail::require<ShapeError>(input.rows() == net.input_size(),
                                   "input length " + std::to_string(input.rows()) +
                                       " does not match network input size " +
                                       std::to_string(net.input_size()));
  std::vector<Matrix> outs;
  outs.reserve(net.num_layers() + 1);
  outs.push_back(input);
  for (const auto& layer : net.layers()) {
    Matrix z = layer.weight * outs.back();
    z.colwise() += layer.bias;
    activate(layer.activation, z);
    outs.push_back(std::move(z));
  }
  return outs;
}

}  // namespace kernel

struct Gradients {
  ParameterSet params;
  Matrix input;  // in_dim x batch

  Vector input_vector() const { return input.col(0); }
};

inline Matrix forward_batch(const Network& net, const Matrix& inputs) {
  return std::move(kernel::forward_all(net, inputs).back());
}

inline Vector forward(const Network& net, const Vector& input) {
  return forward_batch(net, input).col(0);
}

/// Gradients of sum over columns of (upstream . output) with respect to the
/// parameters, plus the per-column input gradient. The forward pass is
/// recomputed; pass `output` to receive it.
inline Gradients backward_batch(const Network& net, const Matrix& inputs, const Matrix& upstream,
                                Matrix* output = nullptr) {
  detail::require<ShapeError>(upstream.rows() == net.output_size() && upstream.cols() == inputs.cols(),
                              "upstream gradient shape does not match network output");
  const auto outs = kernel::forward_all(net, inputs);
  if (output) *output = outs.back();
  Gradients g;
  g.params.weights.resize(net.num_layers());
  g.params.biases.resize(net.num_layers());
  Matrix delta = upstream;
  for (std::size_t i = net.num_layers(); i-- > 0;) {
    const auto& layer = net.layers()[i];
    kernel::activation_backward(layer.activation, outs[i + 1], delta);
    g.params.weights[i].noalias() = delta * outs[i].transpose();
    g.params.biases[i] = delta.rowwise().sum();
    Matrix next = layer.weight.transpose() * delta;
    delta = std::move(next);
  }
  g.input = std::move(delta);
  return g;
}

inline Gradients backward(const Network& net, const Vector& input, const Vector& upstream) {
  return backward_batch(net, input, upstream);
}

struct AdamState {
  ParameterSet first_moment;
  ParameterSet second_moment;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  bool operator==(const AdamState&) const = default;
};

inline AdamState make_adam_state(const Network& net, double beta1 = 0.9, double beta2 = 0.999,
                                 double epsilon = 1e-8) {
  return AdamState{net.zeros_like(), net.zeros_like(), 0, beta1, beta2, epsilon};
}

/// Bias-corrected Adam step. Throws NumericError before touching anything if
/// the gradients are not finite.
inline void adam_step(Network& net, const ParameterSet& grads, AdamState& state, double lr) {
  detail::require<ConfigError>(lr > 0.0, "learning rate must be positive");
  detail::require<ShapeError>(grads.weights.size() == net.num_layers() &&
                                       state.first_moment.weights.size() == net.num_layers(),
                                   "gradient/optimizer shapes do not mirror the network");
  if (!grads.all_finite()) throw NumericError("non-finite gradient passed to adam_step");

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
    detail::require<ShapeError>(param.rows() == g.rows() && param.cols() == g.cols(),
                                     "gradient shape mismatch");
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.epsilon);
  };
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    auto& layer = net.mutable_layers()[i];
    update(layer.weight, grads.weights[i], state.first_moment.weights[i], state.second_moment.weights[i]);
    update(layer.bias, grads.biases[i], state.first_moment.biases[i], state.second_moment.biases[i]);
  }
}

inline void adam_step(Network& net, const Gradients& grads, AdamState& state, double lr) {
  adam_step(net, grads.params, state, lr);
}

/// target <- (1 - tau) * target + tau * source, element-wise.
inline void polyak_update(Network& target, const Network& source, double tau) {
  detail::require<ConfigError>(tau >= 0.0 && tau <= 1.0, "polyak tau must lie in [0, 1]");
  detail::require<ShapeError>(target.same_architecture(source), "polyak architecture mismatch");
  for (std::size_t i = 0; i < target.num_layers(); ++i) {
    auto& t = target.mutable_layers()[i];
    const auto& s = source.layers()[i];
    t.weight = (1.0 - tau) * t.weight + tau * s.weight;
    t.bias = (1.0 - tau) * t.bias + tau * s.bias;
  }
}

// ---------------------------------------------------------------------------
// Checkpoints.
//
// Network file layout, all integers and floats little-endian:
//   8 bytes  magic "CGMNET01"
//   u32      number of layer sizes L+1
//   u32[L+1] layer sizes, input first
//   u8[L]    activation tags (0 relu, 1 tanh, 2 linear)
//   f64[...] per layer: weight row-major (out x in), then bias
// Adam file layout:
//   8 bytes  magic "CGMADAM1"
//   i64 step, f64 beta1, f64 beta2, f64 epsilon
//   f64[...] first moments then second moments, same order as the network
// ---------------------------------------------------------------------------

namespace io {

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(bytes.data(), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  std::array<char, sizeof(T)> bytes;
  in.read(bytes.data(), sizeof(T));
  if (!in) throw InputError("truncated checkpoint");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

inline void write_matrix(std::ostream& out, const Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) write_le<double>(out, m(r, c));
}

inline void read_matrix(std::istream& in, Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = read_le<double>(in);
}

inline void read_vector(std::istream& in, Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = read_le<double>(in);
}

inline void write_parameters(std::ostream& out, const ParameterSet& p) {
  for (std::size_t i = 0; i < p.weights.size(); ++i) {
    write_matrix(out, p.weights[i]);
    for (Eigen::Index j = 0; j < p.biases[i].size(); ++j) write_le<double>(out, p.biases[i](j));
  }
}

inline void read_parameters(std::istream& in, ParameterSet& p) {
  for (std::size_t i = 0; i < p.weights.size(); ++i) {
    read_matrix(in, p.weights[i]);
    read_vector(in, p.biases[i]);
  }
}

constexpr std::string_view kNetworkMagic = "CGMNET01";
constexpr std::string_view kAdamMagic = "CGMADAM1";

inline void expect_magic(std::istream& in, std::string_view magic) {
  std::string got(magic.size(), '\0');
  in.read(got.data(), static_cast<std::streamsize>(got.size()));
  if (!in || got != magic) throw InputError("bad checkpoint magic, expected " + std::string(magic));
}

}  // namespace io

inline void save_network(std::ostream& out, const Network& net) {
  out.write(io::kNetworkMagic.data(), io::kNetworkMagic.size());
  const auto sizes = net.layer_sizes();
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(sizes.size()));
  for (int s : sizes) io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s));
  for (const auto& l : net.layers()) io::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(l.activation));
  for (const auto& l : net.layers()) {
    io::write_matrix(out, l.weight);
    for (Eigen::Index j = 0; j < l.bias.size(); ++j) io::write_le<double>(out, l.bias(j));
  }
}

inline Network load_network(std::istream& in) {
  io::expect_magic(in, io::kNetworkMagic);
  const auto count = io::read_le<std::uint32_t>(in);
  if (count < 2 || count > 64) throw InputError("implausible layer count in checkpoint");
  std::vector<int> sizes(count);
  for (auto& s : sizes) s = static_cast<int>(io::read_le<std::uint32_t>(in));
  std::vector<Layer> layers(count - 1);
  for (auto& l : layers) {
    const auto tag = io::read_le<std::uint8_t>(in);
    if (tag > 2) throw InputError("unknown activation tag in checkpoint");
    l.activation = static_cast<Activation>(tag);
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].weight.resize(sizes[i + 1], sizes[i]);
    layers[i].bias.resize(sizes[i + 1]);
    io::read_matrix(in, layers[i].weight);
    io::read_vector(in, layers[i].bias);
  }
  return Network(std::move(layers));
}

inline void save_adam(std::ostream& out, const AdamState& s) {
  out.write(io::kAdamMagic.data(), io::kAdamMagic.size());
  io::write_le<std::int64_t>(out, s.step);
  io::write_le<double>(out, s.beta1);
  io::write_le<double>(out, s.beta2);
  io::write_le<double>(out, s.epsilon);
  io::write_parameters(out, s.first_moment);
  io::write_parameters(out, s.second_moment);
}

/// `net` supplies the parameter shapes.
inline AdamState load_adam(std::istream& in, const Network& net) {
  io::expect_magic(in, io::kAdamMagic);
  AdamState s = make_adam_state(net);
  s.step = io::read_le<std::int64_t>(in);
  s.beta1 = io::read_le<double>(in);
  s.beta2 = io::read_le<double>(in);
  s.epsilon = io::read_le<double>(in);
  io::read_parameters(in, s.first_moment);
  io::read_parameters(in, s.second_moment);
  return s;
}

}  // namespace cgm::nn
