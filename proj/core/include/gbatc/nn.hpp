#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "gbatc/rng.hpp"

// Minimal reverse-mode training engine for sequential networks built from
// fully connected, 3D convolution, 3D transposed convolution and Leaky ReLU
// layers.
namespace gbatc::nn {

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, double fill = 0.0);
  Tensor(std::vector<int> shape, std::vector<double> data);

  const std::vector<int>& shape() const { return shape_; }
  int dim(std::size_t i) const { return shape_[i]; }
  std::size_t size() const { return data_.size(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  bool has_grad() const { return !grad_.empty(); }
  std::span<double> grad() { return grad_; }
  std::span<const double> grad() const { return grad_; }
  void zero_grad() { grad_.assign(data_.size(), 0.0); }

  void reshape(std::vector<int> shape);

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
  std::vector<double> grad_;
};

std::size_t shape_size(std::span<const int> shape);

enum class LayerKind : std::uint8_t {
  kFullyConnected = 1,
  kConv3d = 2,
  kConv3dTranspose = 3,
  kLeakyRelu = 4,
};

struct Dim3 {
  int d = 1;
  int h = 1;
  int w = 1;
  friend bool operator==(const Dim3&, const Dim3&) = default;
};

struct LayerSpec {
  LayerKind kind = LayerKind::kLeakyRelu;
  int in = 0;   // input channels (conv) or units (fc)
  int out = 0;  // output channels or units
  Dim3 kernel;
  Dim3 stride;
  Dim3 padding;
  double negative_slope = 0.01;
  // fc only: per-sample shape the output is viewed as, e.g. {C, D, H, W}.
  // Empty means a flat vector of `out` units.
  std::vector<int> output_shape;

  static LayerSpec fc(int in, int out, std::vector<int> output_shape = {});
  static LayerSpec conv3d(int in, int out, Dim3 kernel, Dim3 stride, Dim3 padding);
  static LayerSpec conv3d_transpose(int in, int out, Dim3 kernel, Dim3 stride, Dim3 padding);
  static LayerSpec leaky_relu(double slope = 0.01);

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual const LayerSpec& spec() const = 0;
  // Per-sample output shape; throws ErrorKind::kConfiguration if the input
  // shape is incompatible.
  virtual std::vector<int> output_shape(const std::vector<int>& sample_in) const = 0;
  virtual void forward(const Tensor& in, Tensor& out) const = 0;
  // Adds parameter gradients into the parameters' grad buffers and writes
  // the input gradient.
  virtual void backward(const Tensor& in, const Tensor& grad_out, Tensor& grad_in) = 0;
  virtual std::vector<Tensor*> parameters() { return {}; }
  virtual std::vector<const Tensor*> parameters() const { return {}; }
  // Fan-in / fan-out used for Glorot-uniform initialization.
  virtual std::pair<int, int> fans() const { return {0, 0}; }
};

std::unique_ptr<Layer> make_layer(const LayerSpec& spec);

class Network {
 public:
  Network() = default;
  // Shapes are per sample (no batch dimension). Throws kConfiguration when a
  // layer cannot consume its input shape.
  Network(std::vector<int> input_shape, std::vector<LayerSpec> specs);

  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  const std::vector<int>& input_shape() const { return input_shape_; }
  const std::vector<int>& output_shape() const { return shapes_.back(); }
  std::size_t layer_count() const { return layers_.size(); }
  const LayerSpec& layer_spec(std::size_t i) const { return layers_[i]->spec(); }
  const std::vector<LayerSpec>& specs() const { return specs_; }

  // Records intermediates for backward. Input shape is {N, input_shape...};
  // a mismatch throws kShape naming the first layer.
  Tensor forward(const Tensor& batch);
  // Same arithmetic as forward without recording; safe to call concurrently.
  Tensor infer(const Tensor& batch) const;
  // Accumulates parameter gradients and returns d loss / d input; kState if
  // forward has not run.
  Tensor backward(const Tensor& loss_grad);

  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();

  // Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
  void init_glorot(Rng& rng);
  // Rounds every parameter through float32, the stored precision.
  void round_parameters_to_float();

  // "GBNN" | u16 version | input shape | layer table | float32 parameters.
  std::vector<std::uint8_t> serialize() const;
  static Network deserialize(std::span<const std::uint8_t> bytes);

 private:
  void check_input(const Tensor& batch) const;

  std::vector<int> input_shape_;
  std::vector<LayerSpec> specs_;
  std::vector<std::unique_ptr<Layer>> layers_;
  std::vector<std::vector<int>> shapes_;  // shapes_[0] = input, shapes_[i+1] = layer i output
  std::vector<Tensor> activations_;
  bool recorded_ = false;
};

// Mean squared error over every element; writes d loss / d prediction into
// `grad` when non-null.
double mse_loss(const Tensor& prediction, const Tensor& target, Tensor* grad);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  // One bias-corrected Adam update using each parameter's grad buffer.
  void step(std::span<Tensor* const> params);
  std::int64_t steps() const { return t_; }

 private:
  AdamConfig config_;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace gbatc::nn
