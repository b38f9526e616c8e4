#include "gbatc/predictors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

#include "gbatc/bytes.hpp"
#include "gbatc/error.hpp"
#include "gbatc/parallel.hpp"
#include "gbatc/rng.hpp"

namespace gbatc {
namespace {

constexpr const char* kModule = "predictors";
constexpr std::size_t kInferChunk = 256;

void write_geometry(ByteWriter& w, const BlockGeometry& g) {
  w.u32(static_cast<std::uint32_t>(g.timesteps));
  w.u32(static_cast<std::uint32_t>(g.rows));
  w.u32(static_cast<std::uint32_t>(g.cols));
  w.u8(static_cast<std::uint8_t>(g.remainder));
}

BlockGeometry read_geometry(ByteReader& r) {
  BlockGeometry g;
  g.timesteps = static_cast<int>(r.u32());
  g.rows = static_cast<int>(r.u32());
  g.cols = static_cast<int>(r.u32());
  const std::uint8_t policy = r.u8();
  if (policy > 1) throw Error(ErrorKind::kCorruption, kModule, "unknown remainder policy");
  g.remainder = static_cast<RemainderPolicy>(policy);
  if (g.timesteps < 1 || g.rows < 1 || g.cols < 1 || g.block_size() > (1u << 24)) {
    throw Error(ErrorKind::kCorruption, kModule, "implausible block geometry in predictor blob");
  }
  return g;
}

void write_blob(ByteWriter& w, const std::vector<std::uint8_t>& blob) {
  w.u32(static_cast<std::uint32_t>(blob.size()));
  w.bytes(blob);
}

std::span<const std::uint8_t> read_blob(ByteReader& r) {
  const std::uint32_t n = r.u32();
  return r.bytes(n);
}

// Normalized block values as a count x S x K x N1 x N2 tensor.
nn::Tensor normalized_tensor(std::span<const BlockInstance> blocks, const Normalizer& norm,
                             std::size_t begin, std::size_t end) {
  const BlockGeometry& g = blocks[begin].geometry;
  const int s_count = blocks[begin].species;
  const std::size_t d = g.block_size();
  nn::Tensor t({static_cast<int>(end - begin), s_count, g.timesteps, g.rows, g.cols});
  auto data = t.data();
  std::size_t out = 0;
  for (std::size_t b = begin; b < end; ++b) {
    for (int s = 0; s < s_count; ++s) {
      const auto slice = blocks[b].species_slice(s);
      for (std::size_t j = 0; j < d; ++j) data[out++] = norm.normalize(s, slice[j]);
    }
  }
  return t;
}

std::vector<double> network_infer_rows(const nn::Network& net, std::span<const double> rows,
                                       std::size_t count, int workers) {
  const auto& in_shape = net.input_shape();
  const auto& out_shape = net.output_shape();
  const std::size_t in_len = nn::shape_size(in_shape);
  const std::size_t out_len = nn::shape_size(out_shape);
  std::vector<double> out(count * out_len);
  const std::size_t chunks = (count + kInferChunk - 1) / kInferChunk;
  parallel_for(chunks, workers, [&](std::size_t cb, std::size_t ce) {
    for (std::size_t c = cb; c < ce; ++c) {
      const std::size_t begin = c * kInferChunk;
      const std::size_t end = std::min(count, begin + kInferChunk);
      std::vector<int> shape{static_cast<int>(end - begin)};
      shape.insert(shape.end(), in_shape.begin(), in_shape.end());
      nn::Tensor batch(shape, std::vector<double>(rows.begin() + static_cast<std::ptrdiff_t>(begin * in_len),
                                                  rows.begin() + static_cast<std::ptrdiff_t>(end * in_len)));
      const nn::Tensor y = net.infer(batch);
      std::copy(y.data().begin(), y.data().end(), out.begin() + static_cast<std::ptrdiff_t>(begin * out_len));
    }
  });
  return out;
}

std::vector<nn::Tensor*> concat(std::vector<nn::Tensor*> a, const std::vector<nn::Tensor*>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

std::string to_string(PredictorKind kind) {
  switch (kind) {
    case PredictorKind::kZero: return "zero";
    case PredictorKind::kPca: return "pca";
    case PredictorKind::kGba: return "gba";
    case PredictorKind::kGbatc: return "gbatc";
  }
  return "unknown";
}

// -- Normalizer ---------------------------------------------------------------

Normalizer::Normalizer(std::span<const SpeciesRange> ranges) {
  for (const SpeciesRange& r : ranges) {
    offset_.push_back(r.min);
    scale_.push_back(r.span() > 0.0 ? r.span() : 1.0);
  }
}

void Normalizer::serialize(ByteWriter& out) const {
  out.u32(static_cast<std::uint32_t>(offset_.size()));
  for (std::size_t s = 0; s < offset_.size(); ++s) {
    out.f64(offset_[s]);
    out.f64(scale_[s]);
  }
}

Normalizer Normalizer::deserialize(ByteReader& in) {
  Normalizer n;
  const std::uint32_t count = in.u32();
  if (count > in.remaining() / 16) throw Error(ErrorKind::kCorruption, kModule, "normalizer truncated");
  for (std::uint32_t s = 0; s < count; ++s) {
    n.offset_.push_back(in.f64());
    n.scale_.push_back(in.f64());
    if (!std::isfinite(n.offset_.back()) || !(n.scale_.back() > 0.0)) {
      throw Error(ErrorKind::kCorruption, kModule, "invalid normalizer parameters");
    }
  }
  return n;
}

// -- Predictor ----------------------------------------------------------------

void Predictor::require_trained(const char* op) const {
  if (!trained()) {
    throw Error(ErrorKind::kState, kModule, std::string(op) + " on an untrained predictor");
  }
}

void Predictor::require_shape(std::span<const BlockInstance> blocks) const {
  for (const BlockInstance& b : blocks) {
    if (b.species != species() || b.geometry.timesteps != geometry().timesteps ||
        b.geometry.rows != geometry().rows || b.geometry.cols != geometry().cols) {
      throw Error(ErrorKind::kShape, kModule, "block shape does not match the predictor");
    }
  }
}

std::vector<BlockInstance> to_blocks(std::span<const double> values,
                                     std::span<const BlockInstance> like) {
  std::vector<BlockInstance> out;
  out.reserve(like.size());
  std::size_t off = 0;
  for (const BlockInstance& b : like) {
    BlockInstance r;
    r.index = b.index;
    r.species = b.species;
    r.geometry = b.geometry;
    r.values.assign(values.begin() + static_cast<std::ptrdiff_t>(off),
                    values.begin() + static_cast<std::ptrdiff_t>(off + b.values.size()));
    off += b.values.size();
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<BlockInstance> predict(const Predictor& predictor,
                                   std::span<const BlockInstance> blocks) {
  if (!predictor.trained()) {
    throw Error(ErrorKind::kState, kModule, "predict on an untrained predictor");
  }
  const LatentBatch latents = predictor.encode(blocks);
  return to_blocks(predictor.decode(latents), blocks);
}

// -- Zero ---------------------------------------------------------------------

LatentBatch ZeroPredictor::encode(std::span<const BlockInstance> blocks) const {
  require_shape(blocks);
  return LatentBatch{blocks.size(), 0, {}};
}

std::vector<double> ZeroPredictor::decode(const LatentBatch& latents) const {
  return std::vector<double>(latents.count * static_cast<std::size_t>(species_) * geometry_.block_size(), 0.0);
}

std::vector<std::uint8_t> ZeroPredictor::serialize() const {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(PredictorKind::kZero));
  w.u32(static_cast<std::uint32_t>(species_));
  write_geometry(w, geometry_);
  return w.take();
}

// -- PCA ----------------------------------------------------------------------

PcaPredictor pca_predictor_fit(std::span<const BlockInstance> blocks, int rank,
                               const Normalizer& normalizer) {
  if (blocks.empty()) throw Error(ErrorKind::kRank, kModule, "PCA fit needs at least one block");
  const BlockGeometry& g = blocks.front().geometry;
  const std::size_t d = g.block_size();
  if (rank < 0 || static_cast<std::size_t>(rank) > d) {
    throw Error(ErrorKind::kRank, kModule,
                "rank " + std::to_string(rank) + " outside [0, D=" + std::to_string(d) + "]");
  }
  if (blocks.size() < static_cast<std::size_t>(rank)) {
    throw Error(ErrorKind::kRank, kModule,
                "rank " + std::to_string(rank) + " needs at least as many blocks, have " +
                    std::to_string(blocks.size()));
  }
  PcaPredictor p;
  p.species_ = blocks.front().species;
  p.geometry_ = g;
  p.rank_ = rank;
  p.norm_ = normalizer;
  p.require_shape(blocks);

  const std::size_t n = blocks.size();
  for (int s = 0; s < p.species_; ++s) {
    std::vector<double> rows(n * d);
    std::vector<double> mean(d, 0.0);
    for (std::size_t b = 0; b < n; ++b) {
      const auto slice = blocks[b].species_slice(s);
      for (std::size_t j = 0; j < d; ++j) {
        rows[b * d + j] = normalizer.normalize(s, slice[j]);
        mean[j] += rows[b * d + j];
      }
    }
    for (double& m : mean) m /= static_cast<double>(n);
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t j = 0; j < d; ++j) rows[b * d + j] -= mean[j];
    }
    Matrix cov = outer_product_sum(rows, d);
    for (double& c : cov.data) c /= static_cast<double>(n);
    const SymmetricEigen eig = symmetric_eigen(std::move(cov));
    Matrix basis(d, static_cast<std::size_t>(rank));
    for (std::size_t j = 0; j < d; ++j) {
      for (int k = 0; k < rank; ++k) basis(j, static_cast<std::size_t>(k)) = eig.vectors(j, static_cast<std::size_t>(k));
    }
    p.means_.push_back(std::move(mean));
    p.bases_.push_back(std::move(basis));
  }
  p.trained_ = true;
  return p;
}

std::span<const double> PcaPredictor::mean(int s) const { return means_[static_cast<std::size_t>(s)]; }

LatentBatch PcaPredictor::encode(std::span<const BlockInstance> blocks) const {
  require_trained("encode");
  require_shape(blocks);
  const std::size_t d = geometry_.block_size();
  const std::size_t r = static_cast<std::size_t>(rank_);
  LatentBatch out{blocks.size(), latent_size(), std::vector<double>(blocks.size() * latent_size())};
  parallel_for(blocks.size(), workers_, [&](std::size_t begin, std::size_t end) {
    std::vector<double> centered(d);
    for (std::size_t b = begin; b < end; ++b) {
      for (int s = 0; s < species_; ++s) {
        const auto slice = blocks[b].species_slice(s);
        const auto& m = means_[static_cast<std::size_t>(s)];
        for (std::size_t j = 0; j < d; ++j) centered[j] = norm_.normalize(s, slice[j]) - m[j];
        const Matrix& basis = bases_[static_cast<std::size_t>(s)];
        double* c = out.values.data() + b * out.length + static_cast<std::size_t>(s) * r;
        for (std::size_t k = 0; k < r; ++k) {
          double acc = 0.0;
          for (std::size_t j = 0; j < d; ++j) acc += basis(j, k) * centered[j];
          c[k] = acc;
        }
      }
    }
  });
  return out;
}

std::vector<double> PcaPredictor::decode(const LatentBatch& latents) const {
  require_trained("decode");
  if (latents.length != latent_size()) {
    throw Error(ErrorKind::kShape, kModule, "latent length does not match PCA rank");
  }
  const std::size_t d = geometry_.block_size();
  const std::size_t r = static_cast<std::size_t>(rank_);
  const std::size_t per_block = static_cast<std::size_t>(species_) * d;
  std::vector<double> out(latents.count * per_block);
  parallel_for(latents.count, workers_, [&](std::size_t begin, std::size_t end) {
    for (std::size_t b = begin; b < end; ++b) {
      for (int s = 0; s < species_; ++s) {
        const Matrix& basis = bases_[static_cast<std::size_t>(s)];
        const auto& m = means_[static_cast<std::size_t>(s)];
        const double* c = latents.values.data() + b * latents.length + static_cast<std::size_t>(s) * r;
        double* x = out.data() + b * per_block + static_cast<std::size_t>(s) * d;
        for (std::size_t j = 0; j < d; ++j) {
          double acc = m[j];
          for (std::size_t k = 0; k < r; ++k) acc += basis(j, k) * c[k];
          x[j] = norm_.denormalize(s, acc);
        }
      }
    }
  });
  return out;
}

// Stored at 64-bit: the baseline is meant to reproduce span-contained data to
// round-off, which float32 bases cannot do.
std::vector<std::uint8_t> PcaPredictor::serialize() const {
  require_trained("serialize");
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(PredictorKind::kPca));
  w.u32(static_cast<std::uint32_t>(species_));
  write_geometry(w, geometry_);
  w.u32(static_cast<std::uint32_t>(rank_));
  norm_.serialize(w);
  for (const auto& m : means_) {
    for (double v : m) w.f64(v);
  }
  for (const Matrix& b : bases_) {
    for (double v : b.data) w.f64(v);
  }
  return w.take();
}

PcaPredictor PcaPredictor::deserialize_payload(ByteReader& in) {
  PcaPredictor p;
  p.species_ = static_cast<int>(in.u32());
  p.geometry_ = read_geometry(in);
  p.rank_ = static_cast<int>(in.u32());
  const std::size_t d = p.geometry_.block_size();
  if (p.species_ < 1 || p.rank_ < 0 || static_cast<std::size_t>(p.rank_) > d) {
    throw Error(ErrorKind::kCorruption, kModule, "invalid PCA predictor header");
  }
  p.norm_ = Normalizer::deserialize(in);
  if (p.norm_.species() != p.species_) {
    throw Error(ErrorKind::kCorruption, kModule, "normalizer species count mismatch");
  }
  const std::size_t needed = static_cast<std::size_t>(p.species_) * d * (1 + static_cast<std::size_t>(p.rank_)) * 8;
  if (needed > in.remaining()) throw Error(ErrorKind::kTruncation, kModule, "PCA payload truncated");
  for (int s = 0; s < p.species_; ++s) {
    std::vector<double> m(d);
    for (double& v : m) v = in.f64();
    p.means_.push_back(std::move(m));
  }
  for (int s = 0; s < p.species_; ++s) {
    Matrix b(d, static_cast<std::size_t>(p.rank_));
    for (double& v : b.data) v = in.f64();
    p.bases_.push_back(std::move(b));
  }
  p.trained_ = true;
  return p;
}

// -- Autoencoder --------------------------------------------------------------

AeArchitecture ae_architecture(int species, const BlockGeometry& geometry, const AeConfig& config) {
  if (species < 1) throw Error(ErrorKind::kConfiguration, kModule, "species count must be positive");
  if (config.latent < 1) throw Error(ErrorKind::kConfiguration, kModule, "latent size must be positive");
  using nn::Dim3;
  using nn::LayerSpec;
  // Even spatial axes are halved by a 4-wide stride-2 kernel; odd axes keep a
  // 3-wide stride-1 kernel so every layer tiles its input exactly.
  auto axis = [](int n) { return n % 2 == 0 ? std::pair{4, 2} : std::pair{3, 1}; };
  const auto [kh, sh] = axis(geometry.rows);
  const auto [kw, sw] = axis(geometry.cols);
  const Dim3 k1{3, 3, 3}, s1{1, 1, 1}, pad{1, 1, 1};
  const Dim3 k2{3, kh, kw}, s2{1, sh, sw};
  const int c2 = 2 * species;
  const int r2 = geometry.rows / sh;
  const int w2 = geometry.cols / sw;
  const int flat = c2 * geometry.timesteps * r2 * w2;
  const double a = config.negative_slope;

  AeArchitecture arch;
  arch.input_shape = {species, geometry.timesteps, geometry.rows, geometry.cols};
  arch.encoder = {LayerSpec::conv3d(species, species, k1, s1, pad), LayerSpec::leaky_relu(a),
                  LayerSpec::conv3d(species, c2, k2, s2, pad), LayerSpec::leaky_relu(a),
                  LayerSpec::fc(flat, config.latent)};
  arch.decoder = {LayerSpec::fc(config.latent, flat, {c2, geometry.timesteps, r2, w2}),
                  LayerSpec::leaky_relu(a),
                  LayerSpec::conv3d_transpose(c2, species, k2, s2, pad), LayerSpec::leaky_relu(a),
                  LayerSpec::conv3d_transpose(species, species, k1, s1, pad)};
  // Shape inference validates the stack now rather than mid-training.
  nn::Network enc(arch.input_shape, arch.encoder);
  nn::Network dec({config.latent}, arch.decoder);
  if (dec.output_shape() != arch.input_shape) {
    throw Error(ErrorKind::kConfiguration, kModule, "decoder does not reproduce the block shape");
  }
  return arch;
}

AePredictor ae_train(std::span<const BlockInstance> blocks, const Normalizer& normalizer,
                     const AeConfig& config) {
  if (blocks.empty()) throw Error(ErrorKind::kInvalidInput, kModule, "AE training needs blocks");
  const int species = blocks.front().species;
  const BlockGeometry geometry = blocks.front().geometry;
  const AeArchitecture arch = ae_architecture(species, geometry, config);
  if (config.train.batch_size < 1 || config.train.epochs < 0 || !(config.train.learning_rate > 0.0)) {
    throw Error(ErrorKind::kConfiguration, kModule, "invalid training hyperparameters");
  }

  AePredictor p;
  p.species_ = species;
  p.geometry_ = geometry;
  p.latent_ = config.latent;
  p.norm_ = normalizer;
  p.require_shape(blocks);
  p.encoder_ = nn::Network(arch.input_shape, arch.encoder);
  p.decoder_ = nn::Network({config.latent}, arch.decoder);

  Rng rng(config.train.seed);
  p.encoder_.init_glorot(rng);
  p.decoder_.init_glorot(rng);

  const std::size_t n = blocks.size();
  const nn::Tensor all = normalized_tensor(blocks, normalizer, 0, n);
  const std::size_t sample = all.size() / n;

  auto full_loss = [&] {
    double sum = 0.0;
    for (std::size_t begin = 0; begin < n; begin += kInferChunk) {
      const std::size_t end = std::min(n, begin + kInferChunk);
      std::vector<int> shape = all.shape();
      shape[0] = static_cast<int>(end - begin);
      nn::Tensor x(shape, std::vector<double>(all.data().begin() + static_cast<std::ptrdiff_t>(begin * sample),
                                              all.data().begin() + static_cast<std::ptrdiff_t>(end * sample)));
      const nn::Tensor y = p.decoder_.infer(p.encoder_.infer(x));
      sum += nn::mse_loss(y, x, nullptr) * static_cast<double>(end - begin);
    }
    return sum / static_cast<double>(n);
  };

  p.report_.initial_loss = full_loss();
  nn::Adam adam({config.train.learning_rate});
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const auto params = concat(p.encoder_.parameters(), p.decoder_.parameters());
  const std::size_t batch = static_cast<std::size_t>(config.train.batch_size);
  nn::Tensor grad;

  for (int epoch = 0; epoch < config.train.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < n; begin += batch) {
      const std::size_t end = std::min(n, begin + batch);
      std::vector<int> shape = all.shape();
      shape[0] = static_cast<int>(end - begin);
      nn::Tensor x(shape);
      for (std::size_t i = begin; i < end; ++i) {
        std::copy_n(all.data().begin() + static_cast<std::ptrdiff_t>(order[i] * sample), sample,
                    x.data().begin() + static_cast<std::ptrdiff_t>((i - begin) * sample));
      }
      p.encoder_.zero_grad();
      p.decoder_.zero_grad();
      const nn::Tensor z = p.encoder_.forward(x);
      const nn::Tensor y = p.decoder_.forward(z);
      epoch_loss += nn::mse_loss(y, x, &grad) * static_cast<double>(end - begin);
      p.encoder_.backward(p.decoder_.backward(grad));
      adam.step(params);
    }
    spdlog::debug("ae epoch {}/{} loss {:.6e}", epoch + 1, config.train.epochs,
                  epoch_loss / static_cast<double>(n));
  }

  // Model files hold float32; rounding here keeps a saved model identical to
  // the one in memory.
  p.encoder_.round_parameters_to_float();
  p.decoder_.round_parameters_to_float();
  p.report_.final_loss = full_loss();
  p.report_.epochs = config.train.epochs;
  p.trained_ = true;
  p.has_encoder_ = true;
  return p;
}

LatentBatch AePredictor::encode(std::span<const BlockInstance> blocks) const {
  require_trained("encode");
  if (!has_encoder_) {
    throw Error(ErrorKind::kState, kModule, "encoder is not stored in archived predictors");
  }
  require_shape(blocks);
  LatentBatch out{blocks.size(), latent_size(), {}};
  if (blocks.empty()) return out;
  const nn::Tensor x = normalized_tensor(blocks, norm_, 0, blocks.size());
  out.values = network_infer_rows(encoder_, x.data(), blocks.size(), workers_);
  return out;
}

void AePredictor::attach_encoder(nn::Network encoder) {
  const std::vector<int> block_shape{species_, geometry_.timesteps, geometry_.rows, geometry_.cols};
  if (encoder.input_shape() != block_shape || encoder.output_shape() != std::vector<int>{latent_}) {
    throw Error(ErrorKind::kShape, kModule, "encoder shape does not match the decoder");
  }
  encoder_ = std::move(encoder);
  has_encoder_ = true;
}

std::vector<double> AePredictor::decode_normalized(const LatentBatch& latents) const {
  require_trained("decode");
  if (latents.length != latent_size()) {
    throw Error(ErrorKind::kShape, kModule, "latent length does not match the decoder");
  }
  return network_infer_rows(decoder_, latents.values, latents.count, workers_);
}

std::vector<double> AePredictor::decode(const LatentBatch& latents) const {
  std::vector<double> out = decode_normalized(latents);
  const std::size_t d = geometry_.block_size();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const int s = static_cast<int>((i / d) % static_cast<std::size_t>(species_));
    out[i] = norm_.denormalize(s, out[i]);
  }
  return out;
}

void AePredictor::serialize_payload(ByteWriter& w) const {
  w.u32(static_cast<std::uint32_t>(species_));
  write_geometry(w, geometry_);
  w.u32(static_cast<std::uint32_t>(latent_));
  norm_.serialize(w);
  write_blob(w, decoder_.serialize());
}

void AePredictor::deserialize_payload(ByteReader& in) {
  species_ = static_cast<int>(in.u32());
  geometry_ = read_geometry(in);
  latent_ = static_cast<int>(in.u32());
  norm_ = Normalizer::deserialize(in);
  decoder_ = nn::Network::deserialize(read_blob(in));
  const std::vector<int> block_shape{species_, geometry_.timesteps, geometry_.rows, geometry_.cols};
  if (norm_.species() != species_ || decoder_.input_shape() != std::vector<int>{latent_} ||
      decoder_.output_shape() != block_shape) {
    throw Error(ErrorKind::kCorruption, kModule, "decoder shape inconsistent with predictor header");
  }
  trained_ = true;
  has_encoder_ = false;
}

std::vector<std::uint8_t> AePredictor::serialize() const {
  require_trained("serialize");
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(PredictorKind::kGba));
  serialize_payload(w);
  return w.take();
}

// -- Tensor correction --------------------------------------------------------

CorrectionNetSpec CorrectionNetSpec::default_for(int species) {
  return {{species, 4 * species, 8 * species, 4 * species, species}, 0.01};
}

void CorrectionNetSpec::validate(int species) const {
  if (widths.size() < 2) {
    throw Error(ErrorKind::kConfiguration, kModule, "correction network needs at least two widths");
  }
  if (widths.front() != species || widths.back() != species) {
    throw Error(ErrorKind::kConfiguration, kModule,
                "correction network must map " + std::to_string(species) + " species to " +
                    std::to_string(species));
  }
  for (std::size_t i = 1; i + 1 < widths.size(); ++i) {
    if (widths[i] < species) {
      throw Error(ErrorKind::kConfiguration, kModule,
                  "hidden width " + std::to_string(widths[i]) + " smaller than the " +
                      std::to_string(species) + "-species input");
    }
  }
}

std::vector<double> blocks_to_points(std::span<const double> blocks, int species, std::size_t d) {
  const std::size_t per_block = static_cast<std::size_t>(species) * d;
  const std::size_t count = blocks.size() / per_block;
  std::vector<double> points(blocks.size());
  for (std::size_t b = 0; b < count; ++b) {
    for (int s = 0; s < species; ++s) {
      for (std::size_t j = 0; j < d; ++j) {
        points[(b * d + j) * static_cast<std::size_t>(species) + static_cast<std::size_t>(s)] =
            blocks[b * per_block + static_cast<std::size_t>(s) * d + j];
      }
    }
  }
  return points;
}

std::vector<double> points_to_blocks(std::span<const double> points, int species, std::size_t d) {
  const std::size_t per_block = static_cast<std::size_t>(species) * d;
  const std::size_t count = points.size() / per_block;
  std::vector<double> blocks(points.size());
  for (std::size_t b = 0; b < count; ++b) {
    for (int s = 0; s < species; ++s) {
      for (std::size_t j = 0; j < d; ++j) {
        blocks[b * per_block + static_cast<std::size_t>(s) * d + j] =
            points[(b * d + j) * static_cast<std::size_t>(species) + static_cast<std::size_t>(s)];
      }
    }
  }
  return blocks;
}

void apply_correction_net(const nn::Network& network, std::span<double> points, int species,
                          int workers) {
  const std::size_t count = points.size() / static_cast<std::size_t>(species);
  const std::vector<double> out = network_infer_rows(network, points, count, workers);
  std::copy(out.begin(), out.end(), points.begin());
}

CorrectionModel correction_train(std::span<const double> original,
                                 std::span<const double> reconstructed, int species,
                                 const CorrectionNetSpec& spec, const TrainConfig& config) {
  spec.validate(species);
  if (original.size() != reconstructed.size() || original.size() % static_cast<std::size_t>(species) != 0) {
    throw Error(ErrorKind::kShape, kModule, "original and reconstructed point sets differ in shape");
  }
  if (config.batch_size < 1 || config.epochs < 0 || !(config.learning_rate > 0.0)) {
    throw Error(ErrorKind::kConfiguration, kModule, "invalid training hyperparameters");
  }
  const std::size_t n = original.size() / static_cast<std::size_t>(species);
  const std::size_t layers = spec.widths.size() - 1;

  std::vector<nn::LayerSpec> specs;
  for (std::size_t l = 0; l < layers; ++l) {
    specs.push_back(nn::LayerSpec::fc(spec.widths[l], spec.widths[l + 1]));
    if (l + 1 < layers) specs.push_back(nn::LayerSpec::leaky_relu(spec.negative_slope));
  }
  nn::Network net({species}, specs);

  // Identity path: unit i < S carries x_i + 1 through every layer (positive,
  // so Leaky ReLU passes it unchanged) and the last bias removes the shift.
  // Extra units receive random inputs but start with zero outgoing weights.
  Rng rng(config.seed);
  {
    std::size_t fc = 0;
    for (std::size_t i = 0; i < net.layer_count(); ++i) {
      if (net.layer_spec(i).kind != nn::LayerKind::kFullyConnected) continue;
      auto params = net.parameters();
      nn::Tensor& w = *params[2 * fc];
      nn::Tensor& b = *params[2 * fc + 1];
      const int in = spec.widths[fc];
      const int out = spec.widths[fc + 1];
      const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
      for (int r = 0; r < out; ++r) {
        for (int c = 0; c < in; ++c) {
          double v = 0.0;
          if (r < species) {
            v = r == c ? 1.0 : 0.0;
          } else {
            v = rng.uniform(-limit, limit);
          }
          w[static_cast<std::size_t>(r) * static_cast<std::size_t>(in) + static_cast<std::size_t>(c)] = v;
        }
        double bias = 0.0;
        if (r < species && fc == 0) bias = 1.0;
        if (r < species && fc + 1 == layers) bias = fc == 0 ? 0.0 : -1.0;
        b[static_cast<std::size_t>(r)] = bias;
      }
      ++fc;
    }
  }

  auto evaluate = [&](const nn::Network& candidate) {
    const std::vector<double> y = network_infer_rows(candidate, reconstructed, n, 1);
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double d = y[i] - original[i];
      sum += d * d;
    }
    return sum / static_cast<double>(y.size());
  };

  CorrectionModel model;
  {
    double sum = 0.0;
    for (std::size_t i = 0; i < original.size(); ++i) {
      const double d = reconstructed[i] - original[i];
      sum += d * d;
    }
    model.report.raw_mse = original.empty() ? 0.0 : sum / static_cast<double>(original.size());
  }
  nn::Network best = net;
  best.round_parameters_to_float();
  model.report.initial_mse = n == 0 ? 0.0 : evaluate(best);
  double best_mse = model.report.initial_mse;

  nn::Adam adam({config.learning_rate});
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const auto params = net.parameters();
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  const std::size_t s = static_cast<std::size_t>(species);
  nn::Tensor grad;
  for (int epoch = 1; epoch <= config.epochs && n > 0; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t begin = 0; begin < n; begin += batch) {
      const std::size_t end = std::min(n, begin + batch);
      nn::Tensor x({static_cast<int>(end - begin), species});
      nn::Tensor target({static_cast<int>(end - begin), species});
      for (std::size_t i = begin; i < end; ++i) {
        for (std::size_t c = 0; c < s; ++c) {
          x[(i - begin) * s + c] = reconstructed[order[i] * s + c];
          target[(i - begin) * s + c] = original[order[i] * s + c];
        }
      }
      net.zero_grad();
      nn::mse_loss(net.forward(x), target, &grad);
      net.backward(grad);
      adam.step(params);
    }
    nn::Network candidate = net;
    candidate.round_parameters_to_float();
    const double mse = evaluate(candidate);
    spdlog::debug("correction epoch {}/{} mse {:.6e}", epoch, config.epochs, mse);
    if (mse < best_mse) {
      best_mse = mse;
      best = std::move(candidate);
      model.report.best_epoch = epoch;
    }
  }
  model.network = std::move(best);
  model.report.active = best_mse < model.report.raw_mse;
  model.report.final_mse = model.report.active ? best_mse : model.report.raw_mse;
  return model;
}

GbatcPredictor::GbatcPredictor(AePredictor ae, CorrectionModel correction)
    : AePredictor(std::move(ae)),
      correction_(std::move(correction.network)),
      correction_report_(correction.report),
      active_(correction.report.active) {}

std::vector<double> GbatcPredictor::decode(const LatentBatch& latents) const {
  std::vector<double> out = decode_normalized(latents);
  const std::size_t d = geometry_.block_size();
  if (active_) {
    std::vector<double> points = blocks_to_points(out, species_, d);
    apply_correction_net(correction_, points, species_, workers_);
    out = points_to_blocks(points, species_, d);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const int s = static_cast<int>((i / d) % static_cast<std::size_t>(species_));
    out[i] = norm_.denormalize(s, out[i]);
  }
  return out;
}

std::vector<std::uint8_t> GbatcPredictor::serialize() const {
  require_trained("serialize");
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(PredictorKind::kGbatc));
  serialize_payload(w);
  w.u8(active_ ? 1 : 0);
  if (active_) write_blob(w, correction_.serialize());
  return w.take();
}

std::unique_ptr<Predictor> deserialize_predictor(std::span<const std::uint8_t> blob) {
  ByteReader r(blob, kModule);
  const std::uint8_t tag = r.u8();
  switch (tag) {
    case static_cast<std::uint8_t>(PredictorKind::kZero): {
      const int species = static_cast<int>(r.u32());
      const BlockGeometry g = read_geometry(r);
      r.expect_done();
      return std::make_unique<ZeroPredictor>(species, g);
    }
    case static_cast<std::uint8_t>(PredictorKind::kPca): {
      auto p = std::make_unique<PcaPredictor>(PcaPredictor::deserialize_payload(r));
      r.expect_done();
      return p;
    }
    case static_cast<std::uint8_t>(PredictorKind::kGba): {
      auto p = std::make_unique<AePredictor>();
      p->deserialize_payload(r);
      r.expect_done();
      return p;
    }
    case static_cast<std::uint8_t>(PredictorKind::kGbatc): {
      auto p = std::make_unique<GbatcPredictor>();
      p->deserialize_payload(r);
      p->active_ = r.u8() != 0;
      if (p->active_) {
        p->correction_ = nn::Network::deserialize(read_blob(r));
        if (p->correction_.input_shape() != std::vector<int>{p->species_} ||
            p->correction_.output_shape() != std::vector<int>{p->species_}) {
          throw Error(ErrorKind::kCorruption, kModule, "correction network shape mismatch");
        }
      }
      r.expect_done();
      return p;
    }
    default:
      throw Error(ErrorKind::kCorruption, kModule, "unknown predictor tag " + std::to_string(tag));
  }
}

}  // namespace gbatc
