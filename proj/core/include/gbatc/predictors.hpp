#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gbatc/bytes.hpp"
#include "gbatc/field.hpp"
#include "gbatc/linalg.hpp"
#include "gbatc/nn.hpp"

namespace gbatc {

enum class PredictorKind : std::uint8_t { kZero = 0, kPca = 1, kGba = 2, kGbatc = 3 };

std::string to_string(PredictorKind kind);

// Fixed-length latent vectors for a run, stored row-major (count x length).
struct LatentBatch {
  std::size_t count = 0;
  std::size_t length = 0;
  std::vector<double> values;

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(values).subspan(i * length, length);
  }
};

// Per-species min-max scaling to [0, 1]. A constant species maps with unit
// scale so the transform stays invertible.
class Normalizer {
 public:
  Normalizer() = default;
  explicit Normalizer(std::span<const SpeciesRange> ranges);

  int species() const { return static_cast<int>(offset_.size()); }
  double offset(int s) const { return offset_[static_cast<std::size_t>(s)]; }
  double scale(int s) const { return scale_[static_cast<std::size_t>(s)]; }

  double normalize(int s, double v) const { return (v - offset(s)) / scale(s); }
  double denormalize(int s, double v) const { return offset(s) + v * scale(s); }

  void serialize(ByteWriter& out) const;
  static Normalizer deserialize(ByteReader& in);

 private:
  std::vector<double> offset_;
  std::vector<double> scale_;
};

// Common contract for the lossy reconstruction stage. Blocks are passed and
// returned in original units; each predictor normalizes internally.
class Predictor {
 public:
  virtual ~Predictor() = default;

  virtual PredictorKind kind() const = 0;
  virtual int species() const = 0;
  virtual const BlockGeometry& geometry() const = 0;
  virtual std::size_t latent_size() const = 0;
  virtual bool trained() const = 0;
  // Whether the compressor-side encoder is present (deserialized predictors
  // carry only what decompression needs).
  virtual bool can_encode() const { return trained(); }

  virtual LatentBatch encode(std::span<const BlockInstance> blocks) const = 0;
  // Returns count x (S * D) values in original units, species-major per block.
  virtual std::vector<double> decode(const LatentBatch& latents) const = 0;

  // Tagged blob: u8 kind | payload. Every byte is counted in the archive.
  virtual std::vector<std::uint8_t> serialize() const = 0;

  void set_workers(int workers) { workers_ = workers < 1 ? 1 : workers; }
  int workers() const { return workers_; }

 protected:
  void require_trained(const char* op) const;
  void require_shape(std::span<const BlockInstance> blocks) const;

  int workers_ = 1;
};

std::unique_ptr<Predictor> deserialize_predictor(std::span<const std::uint8_t> blob);

// decode(encode(blocks)) as BlockInstances carrying the input indices.
// Untrained predictor -> ErrorKind::kState.
std::vector<BlockInstance> predict(const Predictor& predictor, std::span<const BlockInstance> blocks);

// Rebuilds BlockInstances from decoded values.
std::vector<BlockInstance> to_blocks(std::span<const double> values,
                                     std::span<const BlockInstance> like);

// ---------------------------------------------------------------------------

class ZeroPredictor final : public Predictor {
 public:
  ZeroPredictor(int species, BlockGeometry geometry) : species_(species), geometry_(geometry) {}

  PredictorKind kind() const override { return PredictorKind::kZero; }
  int species() const override { return species_; }
  const BlockGeometry& geometry() const override { return geometry_; }
  std::size_t latent_size() const override { return 0; }
  bool trained() const override { return true; }
  LatentBatch encode(std::span<const BlockInstance> blocks) const override;
  std::vector<double> decode(const LatentBatch& latents) const override;
  std::vector<std::uint8_t> serialize() const override;

 private:
  int species_;
  BlockGeometry geometry_;
};

// Per-species mean plus the top-r principal directions of the vectorized
// D-dimensional species slices. Latent = S * r projection coefficients.
class PcaPredictor final : public Predictor {
 public:
  PcaPredictor() = default;

  PredictorKind kind() const override { return PredictorKind::kPca; }
  int species() const override { return species_; }
  const BlockGeometry& geometry() const override { return geometry_; }
  std::size_t latent_size() const override { return static_cast<std::size_t>(species_) * rank_; }
  bool trained() const override { return trained_; }
  LatentBatch encode(std::span<const BlockInstance> blocks) const override;
  std::vector<double> decode(const LatentBatch& latents) const override;
  std::vector<std::uint8_t> serialize() const override;
  static PcaPredictor deserialize_payload(ByteReader& in);

  int rank() const { return rank_; }
  const Normalizer& normalizer() const { return norm_; }
  std::span<const double> mean(int s) const;
  // D x r basis for species s, column k = k-th principal direction.
  const Matrix& basis(int s) const { return bases_[static_cast<std::size_t>(s)]; }

 private:
  friend PcaPredictor pca_predictor_fit(std::span<const BlockInstance>, int, const Normalizer&);

  int species_ = 0;
  BlockGeometry geometry_;
  int rank_ = 0;
  Normalizer norm_;
  std::vector<std::vector<double>> means_;
  std::vector<Matrix> bases_;
  bool trained_ = false;
};

// rank > D or fewer than `rank` blocks -> ErrorKind::kRank.
PcaPredictor pca_predictor_fit(std::span<const BlockInstance> blocks, int rank,
                               const Normalizer& normalizer);

// ---------------------------------------------------------------------------

struct TrainConfig {
  int epochs = 60;
  int batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

struct AeConfig {
  int latent = 36;
  double negative_slope = 0.01;
  TrainConfig train{300, 64, 1e-3, 0};
};

// Encoder: conv3d(S->S, 3x3x3, stride 1) -> conv3d(S->2S, stride (1,2,2)
// along even spatial axes) -> fc(flatten -> L). Decoder mirrors it with an fc
// and transposed convolutions. Leaky ReLU between layers, linear output.
// Throws kConfiguration for geometries the stack cannot tile.
struct AeArchitecture {
  std::vector<int> input_shape;  // {S, K, N1, N2}
  std::vector<nn::LayerSpec> encoder;
  std::vector<nn::LayerSpec> decoder;
};

AeArchitecture ae_architecture(int species, const BlockGeometry& geometry, const AeConfig& config);

struct TrainReport {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  int epochs = 0;
};

class AePredictor : public Predictor {
 public:
  AePredictor() = default;

  PredictorKind kind() const override { return PredictorKind::kGba; }
  int species() const override { return species_; }
  const BlockGeometry& geometry() const override { return geometry_; }
  std::size_t latent_size() const override { return static_cast<std::size_t>(latent_); }
  bool trained() const override { return trained_; }
  bool can_encode() const override { return trained_ && has_encoder_; }
  LatentBatch encode(std::span<const BlockInstance> blocks) const override;
  std::vector<double> decode(const LatentBatch& latents) const override;
  std::vector<std::uint8_t> serialize() const override;

  const Normalizer& normalizer() const { return norm_; }
  const nn::Network& encoder() const { return encoder_; }
  const nn::Network& decoder() const { return decoder_; }
  const TrainReport& report() const { return report_; }

  // Restores the compressor side of a predictor loaded from a model file.
  // Shape mismatch -> kShape.
  void attach_encoder(nn::Network encoder);

  // Decoder output in normalized units: count x S x D.
  std::vector<double> decode_normalized(const LatentBatch& latents) const;

 protected:
  friend AePredictor ae_train(std::span<const BlockInstance>, const Normalizer&, const AeConfig&);
  friend std::unique_ptr<Predictor> deserialize_predictor(std::span<const std::uint8_t>);

  void serialize_payload(ByteWriter& out) const;
  void deserialize_payload(ByteReader& in);

  int species_ = 0;
  BlockGeometry geometry_;
  int latent_ = 0;
  Normalizer norm_;
  nn::Network encoder_;
  nn::Network decoder_;
  TrainReport report_;
  bool trained_ = false;
  bool has_encoder_ = false;
};

// Trains encoder and decoder jointly on MSE in normalized units. Both are
// rounded to float32 afterwards so compression-side reconstructions match
// what an archive or model file decodes to.
AePredictor ae_train(std::span<const BlockInstance> blocks, const Normalizer& normalizer,
                     const AeConfig& config);

// ---------------------------------------------------------------------------

struct CorrectionNetSpec {
  std::vector<int> widths;  // S -> hidden... -> S
  double negative_slope = 0.01;

  // S -> 4S -> 8S -> 4S -> S.
  static CorrectionNetSpec default_for(int species);
  // kConfiguration if the ends differ from `species` or a hidden width < S.
  void validate(int species) const;
};

struct CorrectionReport {
  double raw_mse = 0.0;      // reconstructed vs original, before correction
  double initial_mse = 0.0;  // identity-initialized network
  double final_mse = 0.0;    // selected network
  int best_epoch = 0;
  bool active = false;  // false when no trained state beat the raw input
};

// Pointwise map from reconstructed S-vectors to original S-vectors. The
// network starts as an exact identity on inputs > -1 (extra units feed
// nothing downstream until trained), and the epoch with the lowest
// full-set MSE is kept, so training never ends worse than it started.
struct CorrectionModel {
  nn::Network network;
  CorrectionReport report;
};

// `original` and `reconstructed` are count x S, row-major, normalized units.
CorrectionModel correction_train(std::span<const double> original,
                                 std::span<const double> reconstructed, int species,
                                 const CorrectionNetSpec& spec, const TrainConfig& config);

// Applies the network to every S-vector of `points` (count x S) in place.
void apply_correction_net(const nn::Network& network, std::span<double> points, int species,
                          int workers = 1);

class GbatcPredictor final : public AePredictor {
 public:
  GbatcPredictor() = default;
  GbatcPredictor(AePredictor ae, CorrectionModel correction);

  PredictorKind kind() const override { return PredictorKind::kGbatc; }
  std::vector<double> decode(const LatentBatch& latents) const override;
  std::vector<std::uint8_t> serialize() const override;

  bool correction_active() const { return active_; }
  const nn::Network& correction() const { return correction_; }
  const CorrectionReport& correction_report() const { return correction_report_; }

 private:
  friend std::unique_ptr<Predictor> deserialize_predictor(std::span<const std::uint8_t>);

  nn::Network correction_;
  CorrectionReport correction_report_;
  bool active_ = false;
};

// Block values (count x S x D, species-major per block) to pointwise
// S-vectors (count*D x S), and back.
std::vector<double> blocks_to_points(std::span<const double> blocks, int species, std::size_t d);
std::vector<double> points_to_blocks(std::span<const double> points, int species, std::size_t d);

}  // namespace gbatc
