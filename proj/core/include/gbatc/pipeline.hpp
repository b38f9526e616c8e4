#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gbatc/archive.hpp"
#include "gbatc/field.hpp"
#include "gbatc/guarantee.hpp"
#include "gbatc/metrics.hpp"
#include "gbatc/predictors.hpp"

namespace gbatc {

// "zero", "pca:R", "gba" or "gbatc".
struct PredictorChoice {
  PredictorKind kind = PredictorKind::kGbatc;
  int rank = 0;

  // Malformed text -> kInvalidSpec.
  static PredictorChoice parse(std::string_view text);
  std::string str() const;
};

struct CompressConfig {
  BlockGeometry geometry;
  PredictorChoice predictor;
  AeConfig ae;
  TrainConfig correction{60, 64, 1e-3, 0};
  BoundMode bound_mode = BoundMode::kNrmse;
  double bound = 1e-3;
  int latent_bins = 4096;
  Schedule schedule = Schedule::kStepwise;
  bool truncate_bases = false;
  std::uint64_t seed = 0;
  int workers = 1;

  // kInvalidSpec / kConfiguration for out-of-range values.
  void validate() const;
};

std::string config_to_json(const CompressConfig& config);
CompressConfig config_from_json(std::string_view text);

struct TrainedPredictor {
  std::unique_ptr<Predictor> predictor;
  std::optional<TrainReport> ae;
  std::optional<CorrectionReport> correction;
};

// Trains the configured predictor on every block of the dataset. Training
// seeds derive from config.seed.
TrainedPredictor train_predictor(const FieldDataset& dataset, const CompressConfig& config);

// Builds the tensor-corrected predictor on top of a trained autoencoder,
// training the correction on decoder output from quantized latents.
GbatcPredictor add_correction(const AePredictor& ae, const FieldDataset& dataset,
                              const CompressConfig& config);

// Model files keep the encoder so compression can reuse a trained predictor,
// plus the configuration it was trained with:
// "GBMD" | u16 version | u32 n | predictor blob | u32 n | encoder blob (may be
// empty) | u32 n | config JSON (may be empty).
std::vector<std::uint8_t> save_model(const Predictor& predictor,
                                     const CompressConfig* training = nullptr);
std::unique_ptr<Predictor> load_model(std::span<const std::uint8_t> bytes);
std::optional<CompressConfig> model_training_config(std::span<const std::uint8_t> bytes);

struct QuantizedLatents {
  double bin = 1.0;
  std::vector<std::int64_t> symbols;
  LatentBatch values;  // dequantized
};

// Uniform bins of (max - min) / bins over every latent value.
QuantizedLatents quantize_latents(const LatentBatch& latents, int bins);

struct BlockViolation {
  std::size_t block = 0;
  int species = 0;
  double error = 0.0;
  double tau = 0.0;
};

struct VerifyReport {
  std::size_t checked = 0;
  std::size_t violations = 0;
  double max_error_ratio = 0.0;  // max over blocks of error / tau
  std::vector<BlockViolation> first;  // up to 16

  bool ok() const { return violations == 0; }
};

// Per-block, per-species l2 error over the grid cells each block covers.
VerifyReport verify_blocks(const FieldDataset& original, const FieldDataset& reconstructed,
                           const BlockGeometry& geometry, std::span<const double> tau);

struct CompressStats {
  std::size_t blocks = 0;
  std::size_t records = 0;
  std::size_t nonempty_records = 0;
  std::size_t coefficients = 0;
  std::size_t max_coefficients = 0;
  double latent_bin = 0.0;
};

struct CompressResult {
  std::vector<std::uint8_t> archive;
  SizeReport size;
  double ratio = 0.0;
  CompressStats stats;
  FieldDataset reconstruction;  // decoded from `archive`
  VerifyReport verify;
  ArchiveHeader header;
};

// Partition, predict, correct, encode, then decompress the produced bytes and
// check every block against tau. A failed check throws kGuarantee. When
// `trained` is null the predictor is trained here.
CompressResult compress(const FieldDataset& dataset, const CompressConfig& config,
                        const Predictor* trained = nullptr);

// Uses nothing but the archive bytes. The result is rounded to float32, the
// precision it is written at.
FieldDataset decompress(std::span<const std::uint8_t> archive, int workers = 1);

struct BenchCell {
  std::string predictor;
  double target = 0.0;
  double achieved_nrmse = 0.0;
  double ratio = 0.0;
  double qoi_nrmse_minor = 0.0;
  double qoi_nrmse_major = 0.0;
  double max_error_ratio = 0.0;
  std::string error;
};

// One compression per (predictor, target) pair; each predictor is trained
// once and shared across targets. Failed cells carry their error message.
std::vector<BenchCell> bench(const FieldDataset& dataset, std::span<const PredictorChoice> predictors,
                             std::span<const double> targets, const CompressConfig& base);

void write_bench_csv(std::ostream& out, std::span<const BenchCell> cells);

}  // namespace gbatc
