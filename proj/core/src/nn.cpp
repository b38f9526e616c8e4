#include "gbatc/nn.hpp"

#include <cmath>
#include <string>

#include "gbatc/bytes.hpp"
#include "gbatc/error.hpp"

namespace gbatc::nn {
namespace {

constexpr const char* kModule = "neuralnet";
constexpr std::uint16_t kBlobVersion = 1;

std::string shape_string(std::span<const int> shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// Conv output extent; stride must tile the padded input exactly.
int conv_extent(int in, int k, int s, int p, const char* axis) {
  const int span = in + 2 * p - k;
  if (k < 1 || s < 1 || p < 0 || span < 0 || span % s != 0) {
    throw Error(ErrorKind::kConfiguration, kModule,
                std::string("conv3d ") + axis + ": input " + std::to_string(in) + ", kernel " +
                    std::to_string(k) + ", stride " + std::to_string(s) + ", padding " +
                    std::to_string(p) + " does not give an integer output size");
  }
  return span / s + 1;
}

int transpose_extent(int in, int k, int s, int p, const char* axis) {
  const int out = (in - 1) * s - 2 * p + k;
  if (k < 1 || s < 1 || p < 0 || out < 1) {
    throw Error(ErrorKind::kConfiguration, kModule,
                std::string("conv3d-transpose ") + axis + ": invalid output size");
  }
  return out;
}

void glorot(Tensor& t, int fan_in, int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& w : t.data()) w = rng.uniform(-limit, limit);
}

class FullyConnected final : public Layer {
 public:
  explicit FullyConnected(const LayerSpec& spec)
      : spec_(spec), weight_({spec.out, spec.in}), bias_({spec.out}) {
    if (spec.in < 1 || spec.out < 1) {
      throw Error(ErrorKind::kConfiguration, kModule, "fc needs positive unit counts");
    }
    if (!spec.output_shape.empty() && shape_size(spec.output_shape) != static_cast<std::size_t>(spec.out)) {
      throw Error(ErrorKind::kConfiguration, kModule, "fc output_shape does not match unit count");
    }
  }

  const LayerSpec& spec() const override { return spec_; }

  std::vector<int> output_shape(const std::vector<int>& in) const override {
    if (shape_size(in) != static_cast<std::size_t>(spec_.in)) {
      throw Error(ErrorKind::kConfiguration, kModule,
                  "fc expects " + std::to_string(spec_.in) + " inputs, got " + shape_string(in));
    }
    return spec_.output_shape.empty() ? std::vector<int>{spec_.out} : spec_.output_shape;
  }

  void forward(const Tensor& in, Tensor& out) const override {
    const std::size_t n = static_cast<std::size_t>(in.dim(0));
    const std::size_t ni = static_cast<std::size_t>(spec_.in);
    const std::size_t no = static_cast<std::size_t>(spec_.out);
    const double* x = in.data().data();
    const double* w = weight_.data().data();
    const double* b = bias_.data().data();
    double* y = out.data().data();
    for (std::size_t s = 0; s < n; ++s) {
      const double* xs = x + s * ni;
      for (std::size_t o = 0; o < no; ++o) {
        const double* wo = w + o * ni;
        double acc = b[o];
        for (std::size_t i = 0; i < ni; ++i) acc += wo[i] * xs[i];
        y[s * no + o] = acc;
      }
    }
  }

  void backward(const Tensor& in, const Tensor& grad_out, Tensor& grad_in) override {
    const std::size_t n = static_cast<std::size_t>(in.dim(0));
    const std::size_t ni = static_cast<std::size_t>(spec_.in);
    const std::size_t no = static_cast<std::size_t>(spec_.out);
    const double* x = in.data().data();
    const double* g = grad_out.data().data();
    const double* w = weight_.data().data();
    double* gw = weight_.grad().data();
    double* gb = bias_.grad().data();
    double* gx = grad_in.data().data();
    for (std::size_t s = 0; s < n; ++s) {
      const double* xs = x + s * ni;
      double* gxs = gx + s * ni;
      for (std::size_t i = 0; i < ni; ++i) gxs[i] = 0.0;
      for (std::size_t o = 0; o < no; ++o) {
        const double go = g[s * no + o];
        if (go == 0.0) continue;
        gb[o] += go;
        double* gwo = gw + o * ni;
        const double* wo = w + o * ni;
        for (std::size_t i = 0; i < ni; ++i) {
          gwo[i] += go * xs[i];
          gxs[i] += go * wo[i];
        }
      }
    }
  }

  std::vector<Tensor*> parameters() override { return {&weight_, &bias_}; }
  std::vector<const Tensor*> parameters() const override { return {&weight_, &bias_}; }
  std::pair<int, int> fans() const override { return {spec_.in, spec_.out}; }

 private:
  LayerSpec spec_;
  Tensor weight_;
  Tensor bias_;
};

struct ConvGeometry {
  int n, ci, co;
  int id, ih, iw;  // input extents
  int od, oh, ow;  // output extents
};

class Conv3d final : public Layer {
 public:
  explicit Conv3d(const LayerSpec& spec)
      : spec_(spec),
        weight_({spec.out, spec.in, spec.kernel.d, spec.kernel.h, spec.kernel.w}),
        bias_({spec.out}) {
    if (spec.in < 1 || spec.out < 1) {
      throw Error(ErrorKind::kConfiguration, kModule, "conv3d needs positive channel counts");
    }
  }

  const LayerSpec& spec() const override { return spec_; }

  std::vector<int> output_shape(const std::vector<int>& in) const override {
    if (in.size() != 4 || in[0] != spec_.in) {
      throw Error(ErrorKind::kConfiguration, kModule,
                  "conv3d expects [" + std::to_string(spec_.in) + ",D,H,W], got " + shape_string(in));
    }
    return {spec_.out, conv_extent(in[1], spec_.kernel.d, spec_.stride.d, spec_.padding.d, "depth"),
            conv_extent(in[2], spec_.kernel.h, spec_.stride.h, spec_.padding.h, "height"),
            conv_extent(in[3], spec_.kernel.w, spec_.stride.w, spec_.padding.w, "width")};
  }

  void forward(const Tensor& in, Tensor& out) const override {
    const ConvGeometry g = geometry(in, out);
    const Dim3 k = spec_.kernel, s = spec_.stride, p = spec_.padding;
    const double* x = in.data().data();
    const double* w = weight_.data().data();
    double* y = out.data().data();
    const std::size_t in_vol = static_cast<std::size_t>(g.id) * g.ih * g.iw;
    const std::size_t out_vol = static_cast<std::size_t>(g.od) * g.oh * g.ow;
    for (int n = 0; n < g.n; ++n) {
      for (int co = 0; co < g.co; ++co) {
        double* yc = y + (static_cast<std::size_t>(n) * g.co + co) * out_vol;
        for (std::size_t v = 0; v < out_vol; ++v) yc[v] = bias_[static_cast<std::size_t>(co)];
        for (int ci = 0; ci < g.ci; ++ci) {
          const double* xc = x + (static_cast<std::size_t>(n) * g.ci + ci) * in_vol;
          for (int kd = 0; kd < k.d; ++kd) {
            for (int kh = 0; kh < k.h; ++kh) {
              for (int kw = 0; kw < k.w; ++kw) {
                const double wv = w[(((static_cast<std::size_t>(co) * g.ci + ci) * k.d + kd) * k.h + kh) * k.w + kw];
                for (int od = 0; od < g.od; ++od) {
                  const int z = od * s.d - p.d + kd;
                  if (z < 0 || z >= g.id) continue;
                  for (int oh = 0; oh < g.oh; ++oh) {
                    const int r = oh * s.h - p.h + kh;
                    if (r < 0 || r >= g.ih) continue;
                    const double* xrow = xc + (static_cast<std::size_t>(z) * g.ih + r) * g.iw;
                    double* yrow = yc + (static_cast<std::size_t>(od) * g.oh + oh) * g.ow;
                    for (int ow = 0; ow < g.ow; ++ow) {
                      const int c = ow * s.w - p.w + kw;
                      if (c < 0 || c >= g.iw) continue;
                      yrow[ow] += wv * xrow[c];
                    }
                  }
                }
              }
            }
          }
        }
      }
    }
  }

  void backward(const Tensor& in, const Tensor& grad_out, Tensor& grad_in) override {
    const ConvGeometry g = geometry(in, grad_out);
    const Dim3 k = spec_.kernel, s = spec_.stride, p = spec_.padding;
    const double* x = in.data().data();
    const double* w = weight_.data().data();
    const double* gy = grad_out.data().data();
    double* gw = weight_.grad().data();
    double* gb = bias_.grad().data();
    double* gx = grad_in.data().data();
    const std::size_t in_vol = static_cast<std::size_t>(g.id) * g.ih * g.iw;
    const std::size_t out_vol = static_cast<std::size_t>(g.od) * g.oh * g.ow;
    for (std::size_t i = 0; i < grad_in.size(); ++i) gx[i] = 0.0;
    for (int n = 0; n < g.n; ++n) {
      for (int co = 0; co < g.co; ++co) {
        const double* gyc = gy + (static_cast<std::size_t>(n) * g.co + co) * out_vol;
        double bsum = 0.0;
        for (std::size_t v = 0; v < out_vol; ++v) bsum += gyc[v];
        gb[co] += bsum;
        for (int ci = 0; ci < g.ci; ++ci) {
          const double* xc = x + (static_cast<std::size_t>(n) * g.ci + ci) * in_vol;
          double* gxc = gx + (static_cast<std::size_t>(n) * g.ci + ci) * in_vol;
          for (int kd = 0; kd < k.d; ++kd) {
            for (int kh = 0; kh < k.h; ++kh) {
              for (int kw = 0; kw < k.w; ++kw) {
                const std::size_t widx =
                    (((static_cast<std::size_t>(co) * g.ci + ci) * k.d + kd) * k.h + kh) * k.w + kw;
                const double wv = w[widx];
                double wacc = 0.0;
                for (int od = 0; od < g.od; ++od) {
                  const int z = od * s.d - p.d + kd;
                  if (z < 0 || z >= g.id) continue;
                  for (int oh = 0; oh < g.oh; ++oh) {
                    const int r = oh * s.h - p.h + kh;
                    if (r < 0 || r >= g.ih) continue;
                    const std::size_t xoff = (static_cast<std::size_t>(z) * g.ih + r) * g.iw;
                    const double* gyrow = gyc + (static_cast<std::size_t>(od) * g.oh + oh) * g.ow;
                    for (int ow = 0; ow < g.ow; ++ow) {
                      const int c = ow * s.w - p.w + kw;
                      if (c < 0 || c >= g.iw) continue;
                      wacc += gyrow[ow] * xc[xoff + c];
                      gxc[xoff + c] += gyrow[ow] * wv;
                    }
                  }
                }
                gw[widx] += wacc;
              }
            }
          }
        }
      }
    }
  }

  std::vector<Tensor*> parameters() override { return {&weight_, &bias_}; }
  std::vector<const Tensor*> parameters() const override { return {&weight_, &bias_}; }
  std::pair<int, int> fans() const override {
    const int vol = spec_.kernel.d * spec_.kernel.h * spec_.kernel.w;
    return {spec_.in * vol, spec_.out * vol};
  }

 private:
  static ConvGeometry geometry(const Tensor& in, const Tensor& out) {
    return {in.dim(0), in.dim(1), out.dim(1), in.dim(2), in.dim(3), in.dim(4),
            out.dim(2), out.dim(3), out.dim(4)};
  }

  LayerSpec spec_;
  Tensor weight_;
  Tensor bias_;
};

// Weight layout [in, out, kd, kh, kw]. Each input voxel scatters a kernel-sized
// patch into the output at stride spacing.
class Conv3dTranspose final : public Layer {
 public:
  explicit Conv3dTranspose(const LayerSpec& spec)
      : spec_(spec),
        weight_({spec.in, spec.out, spec.kernel.d, spec.kernel.h, spec.kernel.w}),
        bias_({spec.out}) {
    if (spec.in < 1 || spec.out < 1) {
      throw Error(ErrorKind::kConfiguration, kModule,
                  "conv3d-transpose needs positive channel counts");
    }
  }

  const LayerSpec& spec() const override { return spec_; }

  std::vector<int> output_shape(const std::vector<int>& in) const override {
    if (in.size() != 4 || in[0] != spec_.in) {
      throw Error(ErrorKind::kConfiguration, kModule,
                  "conv3d-transpose expects [" + std::to_string(spec_.in) + ",D,H,W], got " +
                      shape_string(in));
    }
    return {spec_.out,
            transpose_extent(in[1], spec_.kernel.d, spec_.stride.d, spec_.padding.d, "depth"),
            transpose_extent(in[2], spec_.kernel.h, spec_.stride.h, spec_.padding.h, "height"),
            transpose_extent(in[3], spec_.kernel.w, spec_.stride.w, spec_.padding.w, "width")};
  }

  void forward(const Tensor& in, Tensor& out) const override {
    const int n_batch = in.dim(0), ci_n = in.dim(1), co_n = out.dim(1);
    const int id = in.dim(2), ih = in.dim(3), iw = in.dim(4);
    const int od = out.dim(2), oh = out.dim(3), ow = out.dim(4);
    const Dim3 k = spec_.kernel, s = spec_.stride, p = spec_.padding;
    const std::size_t in_vol = static_cast<std::size_t>(id) * ih * iw;
    const std::size_t out_vol = static_cast<std::size_t>(od) * oh * ow;
    const double* x = in.data().data();
    const double* w = weight_.data().data();
    double* y = out.data().data();
    for (int n = 0; n < n_batch; ++n) {
      for (int co = 0; co < co_n; ++co) {
        double* yc = y + (static_cast<std::size_t>(n) * co_n + co) * out_vol;
        for (std::size_t v = 0; v < out_vol; ++v) yc[v] = bias_[static_cast<std::size_t>(co)];
        for (int ci = 0; ci < ci_n; ++ci) {
          const double* xc = x + (static_cast<std::size_t>(n) * ci_n + ci) * in_vol;
          for (int kd = 0; kd < k.d; ++kd) {
            for (int kh = 0; kh < k.h; ++kh) {
              for (int kw = 0; kw < k.w; ++kw) {
                const double wv = w[(((static_cast<std::size_t>(ci) * co_n + co) * k.d + kd) * k.h + kh) * k.w + kw];
                for (int zi = 0; zi < id; ++zi) {
                  const int z = zi * s.d - p.d + kd;
                  if (z < 0 || z >= od) continue;
                  for (int ri = 0; ri < ih; ++ri) {
                    const int r = ri * s.h - p.h + kh;
                    if (r < 0 || r >= oh) continue;
                    const double* xrow = xc + (static_cast<std::size_t>(zi) * ih + ri) * iw;
                    double* yrow = yc + (static_cast<std::size_t>(z) * oh + r) * ow;
                    for (int cj = 0; cj < iw; ++cj) {
                      const int c = cj * s.w - p.w + kw;
                      if (c < 0 || c >= ow) continue;
                      yrow[c] += wv * xrow[cj];
                    }
                  }
                }
              }
            }
          }
        }
      }
    }
  }

  void backward(const Tensor& in, const Tensor& grad_out, Tensor& grad_in) override {
    const int n_batch = in.dim(0), ci_n = in.dim(1), co_n = grad_out.dim(1);
    const int id = in.dim(2), ih = in.dim(3), iw = in.dim(4);
    const int od = grad_out.dim(2), oh = grad_out.dim(3), ow = grad_out.dim(4);
    const Dim3 k = spec_.kernel, s = spec_.stride, p = spec_.padding;
    const std::size_t in_vol = static_cast<std::size_t>(id) * ih * iw;
    const std::size_t out_vol = static_cast<std::size_t>(od) * oh * ow;
    const double* x = in.data().data();
    const double* w = weight_.data().data();
    const double* gy = grad_out.data().data();
    double* gw = weight_.grad().data();
    double* gb = bias_.grad().data();
    double* gx = grad_in.data().data();
    for (std::size_t i = 0; i < grad_in.size(); ++i) gx[i] = 0.0;
    for (int n = 0; n < n_batch; ++n) {
      for (int co = 0; co < co_n; ++co) {
        const double* gyc = gy + (static_cast<std::size_t>(n) * co_n + co) * out_vol;
        double bsum = 0.0;
        for (std::size_t v = 0; v < out_vol; ++v) bsum += gyc[v];
        gb[co] += bsum;
        for (int ci = 0; ci < ci_n; ++ci) {
          const double* xc = x + (static_cast<std::size_t>(n) * ci_n + ci) * in_vol;
          double* gxc = gx + (static_cast<std::size_t>(n) * ci_n + ci) * in_vol;
          for (int kd = 0; kd < k.d; ++kd) {
            for (int kh = 0; kh < k.h; ++kh) {
              for (int kw = 0; kw < k.w; ++kw) {
                const std::size_t widx =
                    (((static_cast<std::size_t>(ci) * co_n + co) * k.d + kd) * k.h + kh) * k.w + kw;
                const double wv = w[widx];
                double wacc = 0.0;
                for (int zi = 0; zi < id; ++zi) {
                  const int z = zi * s.d - p.d + kd;
                  if (z < 0 || z >= od) continue;
                  for (int ri = 0; ri < ih; ++ri) {
                    const int r = ri * s.h - p.h + kh;
                    if (r < 0 || r >= oh) continue;
                    const std::size_t xoff = (static_cast<std::size_t>(zi) * ih + ri) * iw;
                    const double* gyrow = gyc + (static_cast<std::size_t>(z) * oh + r) * ow;
                    for (int cj = 0; cj < iw; ++cj) {
                      const int c = cj * s.w - p.w + kw;
                      if (c < 0 || c >= ow) continue;
                      wacc += gyrow[c] * xc[xoff + cj];
                      gxc[xoff + cj] += gyrow[c] * wv;
                    }
                  }
                }
                gw[widx] += wacc;
              }
            }
          }
        }
      }
    }
  }

  std::vector<Tensor*> parameters() override { return {&weight_, &bias_}; }
  std::vector<const Tensor*> parameters() const override { return {&weight_, &bias_}; }
  std::pair<int, int> fans() const override {
    const int vol = spec_.kernel.d * spec_.kernel.h * spec_.kernel.w;
    return {spec_.in * vol, spec_.out * vol};
  }

 private:
  LayerSpec spec_;
  Tensor weight_;
  Tensor bias_;
};

class LeakyRelu final : public Layer {
 public:
  explicit LeakyRelu(const LayerSpec& spec) : spec_(spec) {}

  const LayerSpec& spec() const override { return spec_; }
  std::vector<int> output_shape(const std::vector<int>& in) const override { return in; }

  void forward(const Tensor& in, Tensor& out) const override {
    const double a = spec_.negative_slope;
    auto x = in.data();
    auto y = out.data();
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] >= 0.0 ? x[i] : a * x[i];
  }

  void backward(const Tensor& in, const Tensor& grad_out, Tensor& grad_in) override {
    const double a = spec_.negative_slope;
    auto x = in.data();
    auto g = grad_out.data();
    auto gx = grad_in.data();
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] = x[i] >= 0.0 ? g[i] : a * g[i];
  }

 private:
  LayerSpec spec_;
};

std::vector<int> with_batch(int n, const std::vector<int>& sample) {
  std::vector<int> s;
  s.reserve(sample.size() + 1);
  s.push_back(n);
  s.insert(s.end(), sample.begin(), sample.end());
  return s;
}

}  // namespace

// -- Tensor -------------------------------------------------------------------

std::size_t shape_size(std::span<const int> shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw Error(ErrorKind::kShape, kModule, "negative tensor extent");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor::Tensor(std::vector<int> shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_)) {
    throw Error(ErrorKind::kShape, kModule,
                "data length " + std::to_string(data_.size()) + " does not match shape " +
                    shape_string(shape_));
  }
}

void Tensor::reshape(std::vector<int> shape) {
  if (shape_size(shape) != data_.size()) {
    throw Error(ErrorKind::kShape, kModule, "reshape to " + shape_string(shape) + " changes size");
  }
  shape_ = std::move(shape);
}

// -- LayerSpec ------------------------------------------------------------------

LayerSpec LayerSpec::fc(int in, int out, std::vector<int> output_shape) {
  LayerSpec s;
  s.kind = LayerKind::kFullyConnected;
  s.in = in;
  s.out = out;
  s.output_shape = std::move(output_shape);
  return s;
}

LayerSpec LayerSpec::conv3d(int in, int out, Dim3 kernel, Dim3 stride, Dim3 padding) {
  LayerSpec s;
  s.kind = LayerKind::kConv3d;
  s.in = in;
  s.out = out;
  s.kernel = kernel;
  s.stride = stride;
  s.padding = padding;
  return s;
}

LayerSpec LayerSpec::conv3d_transpose(int in, int out, Dim3 kernel, Dim3 stride, Dim3 padding) {
  LayerSpec s = conv3d(in, out, kernel, stride, padding);
  s.kind = LayerKind::kConv3dTranspose;
  return s;
}

LayerSpec LayerSpec::leaky_relu(double slope) {
  LayerSpec s;
  s.kind = LayerKind::kLeakyRelu;
  s.negative_slope = slope;
  return s;
}

std::unique_ptr<Layer> make_layer(const LayerSpec& spec) {
  switch (spec.kind) {
    case LayerKind::kFullyConnected: return std::make_unique<FullyConnected>(spec);
    case LayerKind::kConv3d: return std::make_unique<Conv3d>(spec);
    case LayerKind::kConv3dTranspose: return std::make_unique<Conv3dTranspose>(spec);
    case LayerKind::kLeakyRelu: return std::make_unique<LeakyRelu>(spec);
  }
  throw Error(ErrorKind::kConfiguration, kModule, "unknown layer kind");
}

// -- Network ------------------------------------------------------------------

Network::Network(std::vector<int> input_shape, std::vector<LayerSpec> specs)
    : input_shape_(std::move(input_shape)), specs_(std::move(specs)) {
  shapes_.push_back(input_shape_);
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    try {
      layers_.push_back(make_layer(specs_[i]));
      shapes_.push_back(layers_.back()->output_shape(shapes_.back()));
    } catch (const Error& e) {
      throw Error(e.kind(), kModule, "layer " + std::to_string(i) + ": " + e.what());
    }
  }
  for (auto& layer : layers_) {
    for (Tensor* p : layer->parameters()) p->zero_grad();
  }
}

Network::Network(const Network& other)
    : input_shape_(other.input_shape_), specs_(other.specs_), shapes_(other.shapes_) {
  for (std::size_t i = 0; i < other.layers_.size(); ++i) {
    layers_.push_back(make_layer(specs_[i]));
    auto dst = layers_.back()->parameters();
    auto src = other.layers_[i]->parameters();
    for (std::size_t j = 0; j < dst.size(); ++j) *dst[j] = *src[j];
  }
}

Network& Network::operator=(const Network& other) {
  if (this != &other) *this = Network(other);
  return *this;
}

void Network::check_input(const Tensor& batch) const {
  const auto& shape = batch.shape();
  bool ok = shape.size() == input_shape_.size() + 1;
  for (std::size_t i = 0; ok && i < input_shape_.size(); ++i) ok = shape[i + 1] == input_shape_[i];
  if (!ok) {
    throw Error(ErrorKind::kShape, kModule,
                "layer 0: input " + shape_string(shape) + " does not match [N," +
                    shape_string(input_shape_).substr(1));
  }
}

Tensor Network::forward(const Tensor& batch) {
  check_input(batch);
  const int n = batch.dim(0);
  activations_.clear();
  activations_.reserve(layers_.size() + 1);
  activations_.push_back(batch);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Tensor out(with_batch(n, shapes_[i + 1]));
    layers_[i]->forward(activations_.back(), out);
    activations_.push_back(std::move(out));
  }
  recorded_ = true;
  return activations_.back();
}

Tensor Network::infer(const Tensor& batch) const {
  check_input(batch);
  const int n = batch.dim(0);
  Tensor current = batch;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Tensor out(with_batch(n, shapes_[i + 1]));
    layers_[i]->forward(current, out);
    current = std::move(out);
  }
  return current;
}

Tensor Network::backward(const Tensor& loss_grad) {
  if (!recorded_) {
    throw Error(ErrorKind::kState, kModule, "backward called before forward");
  }
  if (loss_grad.shape() != activations_.back().shape()) {
    throw Error(ErrorKind::kShape, kModule, "loss gradient shape does not match network output");
  }
  Tensor grad = loss_grad;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    Tensor grad_in(activations_[i].shape());
    layers_[i]->backward(activations_[i], grad, grad_in);
    grad = std::move(grad_in);
  }
  return grad;
}

std::vector<Tensor*> Network::parameters() {
  std::vector<Tensor*> out;
  for (auto& layer : layers_) {
    for (Tensor* p : layer->parameters()) out.push_back(p);
  }
  return out;
}

std::vector<const Tensor*> Network::parameters() const {
  std::vector<const Tensor*> out;
  for (const auto& layer : layers_) {
    for (const Tensor* p : std::as_const(*layer).parameters()) out.push_back(p);
  }
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* p : parameters()) n += p->size();
  return n;
}

void Network::zero_grad() {
  for (Tensor* p : parameters()) p->zero_grad();
}

void Network::init_glorot(Rng& rng) {
  for (auto& layer : layers_) {
    auto params = layer->parameters();
    if (params.empty()) continue;
    const auto [fan_in, fan_out] = layer->fans();
    glorot(*params[0], fan_in, fan_out, rng);
    for (std::size_t j = 1; j < params.size(); ++j) {
      for (double& b : params[j]->data()) b = 0.0;
    }
  }
}

void Network::round_parameters_to_float() {
  for (Tensor* p : parameters()) {
    for (double& v : p->data()) v = static_cast<float>(v);
  }
}

std::vector<std::uint8_t> Network::serialize() const {
  ByteWriter w;
  w.bytes(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>("GBNN"), 4));
  w.u16(kBlobVersion);
  w.u8(static_cast<std::uint8_t>(input_shape_.size()));
  for (int d : input_shape_) w.u32(static_cast<std::uint32_t>(d));
  w.u16(static_cast<std::uint16_t>(specs_.size()));
  for (const LayerSpec& s : specs_) {
    w.u8(static_cast<std::uint8_t>(s.kind));
    w.u32(static_cast<std::uint32_t>(s.in));
    w.u32(static_cast<std::uint32_t>(s.out));
    for (const Dim3& d : {s.kernel, s.stride, s.padding}) {
      w.u8(static_cast<std::uint8_t>(d.d));
      w.u8(static_cast<std::uint8_t>(d.h));
      w.u8(static_cast<std::uint8_t>(d.w));
    }
    w.f64(s.negative_slope);
    w.u8(static_cast<std::uint8_t>(s.output_shape.size()));
    for (int d : s.output_shape) w.u32(static_cast<std::uint32_t>(d));
  }
  for (const Tensor* p : parameters()) {
    for (double v : p->data()) w.f32(static_cast<float>(v));
  }
  return w.take();
}

Network Network::deserialize(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, kModule);
  auto magic = r.bytes(4);
  if (std::string(magic.begin(), magic.end()) != "GBNN") {
    throw Error(ErrorKind::kCorruption, kModule, "bad network blob magic");
  }
  if (r.u16() != kBlobVersion) throw Error(ErrorKind::kVersion, kModule, "unsupported network blob");
  std::vector<int> input(r.u8());
  for (int& d : input) d = static_cast<int>(r.u32());
  std::vector<LayerSpec> specs(r.u16());
  for (LayerSpec& s : specs) {
    const std::uint8_t kind = r.u8();
    if (kind < 1 || kind > 4) throw Error(ErrorKind::kCorruption, kModule, "unknown layer kind");
    s.kind = static_cast<LayerKind>(kind);
    s.in = static_cast<int>(r.u32());
    s.out = static_cast<int>(r.u32());
    for (Dim3* d : {&s.kernel, &s.stride, &s.padding}) {
      d->d = r.u8();
      d->h = r.u8();
      d->w = r.u8();
    }
    s.negative_slope = r.f64();
    s.output_shape.resize(r.u8());
    for (int& d : s.output_shape) d = static_cast<int>(r.u32());
  }
  Network net(std::move(input), std::move(specs));
  for (Tensor* p : net.parameters()) {
    for (double& v : p->data()) v = r.f32();
  }
  r.expect_done();
  return net;
}

double mse_loss(const Tensor& prediction, const Tensor& target, Tensor* grad) {
  if (prediction.shape() != target.shape()) {
    throw Error(ErrorKind::kShape, kModule, "mse: prediction and target shapes differ");
  }
  const std::size_t n = prediction.size();
  auto p = prediction.data();
  auto t = target.data();
  if (grad != nullptr && grad->shape() != prediction.shape()) *grad = Tensor(prediction.shape());
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = p[i] - t[i];
    sum += d * d;
    if (grad != nullptr) (*grad)[i] = 2.0 * d / static_cast<double>(n);
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

void Adam::step(std::span<Tensor* const> params) {
  if (m_.empty()) {
    for (const Tensor* p : params) {
      m_.emplace_back(p->size(), 0.0);
      v_.emplace_back(p->size(), 0.0);
    }
  }
  if (m_.size() != params.size()) {
    throw Error(ErrorKind::kShape, kModule, "optimizer state does not match parameter list");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t j = 0; j < params.size(); ++j) {
    Tensor& p = *params[j];
    if (p.size() != m_[j].size() || !p.has_grad()) {
      throw Error(ErrorKind::kShape, kModule, "parameter " + std::to_string(j) + " has no matching gradient");
    }
    auto data = p.data();
    auto g = p.grad();
    auto& m = m_[j];
    auto& v = v_[j];
    for (std::size_t i = 0; i < data.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double mh = m[i] / c1;
      const double vh = v[i] / c2;
      data[i] -= config_.learning_rate * mh / (std::sqrt(vh) + config_.epsilon);
    }
  }
}

}  // namespace gbatc::nn
