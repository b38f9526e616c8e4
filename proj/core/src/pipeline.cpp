#include "gbatc/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "json.hpp"

#include "gbatc/bytes.hpp"
#include "gbatc/codec.hpp"
#include "gbatc/error.hpp"
#include "gbatc/field_io.hpp"
#include "gbatc/parallel.hpp"

namespace gbatc {
namespace {

constexpr const char* kModule = "pipeline";
constexpr std::uint16_t kModelVersion = 1;

using nlohmann::json;

std::vector<double> flatten(std::span<const BlockInstance> blocks) {
  std::vector<double> out;
  if (blocks.empty()) return out;
  out.reserve(blocks.size() * blocks.front().values.size());
  for (const BlockInstance& b : blocks) out.insert(out.end(), b.values.begin(), b.values.end());
  return out;
}

std::vector<double> normalized_flat(std::span<const BlockInstance> blocks, const Normalizer& norm) {
  std::vector<double> out;
  for (const BlockInstance& b : blocks) {
    for (int s = 0; s < b.species; ++s) {
      for (double v : b.species_slice(s)) out.push_back(norm.normalize(s, v));
    }
  }
  return out;
}

const AePredictor* as_ae(const Predictor& p) {
  if (p.kind() == PredictorKind::kGba || p.kind() == PredictorKind::kGbatc) {
    return static_cast<const AePredictor*>(&p);
  }
  return nullptr;
}

std::unique_ptr<Predictor> clone(const Predictor& p) {
  // Round trip through the model format so encoders survive.
  return load_model(save_model(p));
}

struct EncodedRecords {
  RecordSection section;
  std::vector<std::vector<std::uint8_t>> used;  // per species column usage
};

EncodedRecords encode_records(std::span<const CorrectionRecord> records, int species, std::size_t d,
                              bool track_usage) {
  EncodedRecords out;
  out.used.assign(static_cast<std::size_t>(species), std::vector<std::uint8_t>(track_usage ? d : 0, 0));
  std::vector<std::int64_t> symbols;
  BitWriter idx;
  for (const CorrectionRecord& r : records) {
    encode_indices(idx, r.indices, d);
    symbols.insert(symbols.end(), r.coefficients.begin(), r.coefficients.end());
    if (track_usage) {
      for (std::uint32_t k : r.indices) out.used[static_cast<std::size_t>(r.species)][k] = 1;
    }
  }
  out.section.indices = idx.finish();
  if (!symbols.empty()) {
    out.section.codebook = huffman_build(count_frequencies(symbols));
    out.section.coefficients = encode_stream(symbols, out.section.codebook);
  }
  return out;
}

std::vector<CorrectionRecord> decode_records(const RecordSection& section, std::size_t blocks,
                                             int species, std::size_t d) {
  std::vector<CorrectionRecord> out;
  out.reserve(blocks * static_cast<std::size_t>(species));
  BitReader idx(section.indices);
  BitReader coef(section.coefficients);
  for (std::size_t b = 0; b < blocks; ++b) {
    for (int s = 0; s < species; ++s) {
      CorrectionRecord r;
      r.block = b;
      r.species = s;
      r.indices = decode_indices(idx, d);
      if (!r.indices.empty() && section.codebook.empty()) {
        throw Error(ErrorKind::kCorruption, kModule, "records reference coefficients but none are stored");
      }
      for (std::size_t i = 0; i < r.indices.size(); ++i) r.coefficients.push_back(section.codebook.decode_one(coef));
      out.push_back(std::move(r));
    }
  }
  if (idx.remaining() != 0 || coef.remaining() != 0) {
    throw Error(ErrorKind::kCorruption, kModule, "record streams carry trailing bits");
  }
  return out;
}

double block_tau(std::span<const double> tau, int s) { return tau[static_cast<std::size_t>(s)]; }

}  // namespace

// -- configuration --------------------------------------------------------------

PredictorChoice PredictorChoice::parse(std::string_view text) {
  if (text == "zero") return {PredictorKind::kZero, 0};
  if (text == "gba") return {PredictorKind::kGba, 0};
  if (text == "gbatc") return {PredictorKind::kGbatc, 0};
  if (text.starts_with("pca:")) {
    const std::string_view digits = text.substr(4);
    int rank = -1;
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), rank);
    if (ec == std::errc{} && ptr == digits.data() + digits.size() && rank >= 0) {
      return {PredictorKind::kPca, rank};
    }
  }
  throw Error(ErrorKind::kInvalidSpec, kModule,
              "predictor must be zero, pca:R, gba or gbatc, got '" + std::string(text) + "'");
}

std::string PredictorChoice::str() const {
  return kind == PredictorKind::kPca ? "pca:" + std::to_string(rank) : to_string(kind);
}

void CompressConfig::validate() const {
  if (!(bound > 0.0) || !std::isfinite(bound)) {
    throw Error(ErrorKind::kInvalidSpec, kModule, "error target must be positive and finite");
  }
  if (latent_bins < 1) throw Error(ErrorKind::kInvalidSpec, kModule, "latent bins must be >= 1");
  if (workers < 1) throw Error(ErrorKind::kInvalidSpec, kModule, "workers must be >= 1");
  if (geometry.timesteps < 1 || geometry.rows < 1 || geometry.cols < 1) {
    throw Error(ErrorKind::kInvalidGeometry, kModule, "block extents must be positive");
  }
  if (predictor.kind == PredictorKind::kPca &&
      static_cast<std::size_t>(predictor.rank) > geometry.block_size()) {
    throw Error(ErrorKind::kRank, kModule,
                fmt::format("pca rank {} exceeds D = {}", predictor.rank, geometry.block_size()));
  }
  for (const TrainConfig* t : {&ae.train, &correction}) {
    if (t->epochs < 0 || t->batch_size < 1 || !(t->learning_rate > 0.0)) {
      throw Error(ErrorKind::kConfiguration, kModule, "invalid training hyperparameters");
    }
  }
  if (ae.latent < 1) throw Error(ErrorKind::kConfiguration, kModule, "latent size must be >= 1");
}

std::string config_to_json(const CompressConfig& c) {
  json j;
  j["geometry"] = {c.geometry.timesteps, c.geometry.rows, c.geometry.cols};
  j["remainder"] = c.geometry.remainder == RemainderPolicy::kDrop ? "drop" : "pad";
  j["predictor"] = c.predictor.str();
  j["latent"] = c.ae.latent;
  j["slope"] = c.ae.negative_slope;
  j["ae_train"] = {{"epochs", c.ae.train.epochs}, {"batch", c.ae.train.batch_size}, {"lr", c.ae.train.learning_rate}};
  j["correction_train"] = {{"epochs", c.correction.epochs}, {"batch", c.correction.batch_size}, {"lr", c.correction.learning_rate}};
  j["bound_mode"] = to_string(c.bound_mode);
  j["bound"] = c.bound;
  j["latent_bins"] = c.latent_bins;
  j["schedule"] = to_string(c.schedule);
  j["truncate_bases"] = c.truncate_bases;
  j["seed"] = c.seed;
  return j.dump();
}

CompressConfig config_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    CompressConfig c;
    const auto g = j.at("geometry").get<std::vector<int>>();
    if (g.size() != 3) throw Error(ErrorKind::kInvalidSpec, kModule, "geometry needs three extents");
    c.geometry = {g[0], g[1], g[2], j.at("remainder").get<std::string>() == "pad" ? RemainderPolicy::kPadReplicate : RemainderPolicy::kDrop};
    c.predictor = PredictorChoice::parse(j.at("predictor").get<std::string>());
    c.ae.latent = j.at("latent").get<int>();
    c.ae.negative_slope = j.at("slope").get<double>();
    for (auto [key, t] : {std::pair{"ae_train", &c.ae.train}, std::pair{"correction_train", &c.correction}}) {
      t->epochs = j.at(key).at("epochs").get<int>();
      t->batch_size = j.at(key).at("batch").get<int>();
      t->learning_rate = j.at(key).at("lr").get<double>();
    }
    c.bound_mode = j.at("bound_mode").get<std::string>() == "absolute" ? BoundMode::kAbsolute : BoundMode::kNrmse;
    c.bound = j.at("bound").get<double>();
    c.latent_bins = j.at("latent_bins").get<int>();
    c.schedule = j.at("schedule").get<std::string>() == "fast" ? Schedule::kFast : Schedule::kStepwise;
    c.truncate_bases = j.at("truncate_bases").get<bool>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kInvalidSpec, kModule, std::string("malformed configuration: ") + e.what());
  }
}

// -- training -------------------------------------------------------------------

QuantizedLatents quantize_latents(const LatentBatch& latents, int bins) {
  QuantizedLatents q;
  q.values.count = latents.count;
  q.values.length = latents.length;
  if (latents.values.empty()) return q;
  const auto [lo, hi] = std::minmax_element(latents.values.begin(), latents.values.end());
  const double range = *hi - *lo;
  q.bin = range > 0.0 ? range / bins : 1.0;
  q.symbols = quantize(latents.values, q.bin);
  q.values.values = dequantize(q.symbols, q.bin);
  return q;
}

GbatcPredictor add_correction(const AePredictor& ae, const FieldDataset& dataset,
                              const CompressConfig& config) {
  const auto blocks = partition(dataset, ae.geometry());
  const QuantizedLatents q = quantize_latents(ae.encode(blocks), config.latent_bins);
  const std::size_t d = ae.geometry().block_size();
  const int s = ae.species();
  const std::vector<double> recon = blocks_to_points(ae.decode_normalized(q.values), s, d);
  const std::vector<double> orig = blocks_to_points(normalized_flat(blocks, ae.normalizer()), s, d);
  TrainConfig tc = config.correction;
  tc.seed = config.seed + 1;
  CorrectionModel model = correction_train(orig, recon, s, CorrectionNetSpec::default_for(s), tc);
  spdlog::info("correction: raw mse {:.4e}, best {:.4e} at epoch {}, {}", model.report.raw_mse,
               model.report.final_mse, model.report.best_epoch, model.report.active ? "active" : "bypassed");
  return GbatcPredictor(ae, std::move(model));
}

TrainedPredictor train_predictor(const FieldDataset& dataset, const CompressConfig& config) {
  config.validate();
  const auto blocks = partition(dataset, config.geometry);
  const Normalizer norm(dataset.ranges());
  const int species = dataset.dims().species;
  TrainedPredictor out;
  switch (config.predictor.kind) {
    case PredictorKind::kZero:
      out.predictor = std::make_unique<ZeroPredictor>(species, config.geometry);
      break;
    case PredictorKind::kPca:
      out.predictor = std::make_unique<PcaPredictor>(pca_predictor_fit(blocks, config.predictor.rank, norm));
      break;
    case PredictorKind::kGba:
    case PredictorKind::kGbatc: {
      AeConfig ac = config.ae;
      ac.train.seed = config.seed;
      AePredictor ae = ae_train(blocks, norm, ac);
      ae.set_workers(config.workers);
      out.ae = ae.report();
      spdlog::info("autoencoder: loss {:.4e} -> {:.4e} over {} epochs", ae.report().initial_loss,
                   ae.report().final_loss, ae.report().epochs);
      if (config.predictor.kind == PredictorKind::kGba) {
        out.predictor = std::make_unique<AePredictor>(std::move(ae));
      } else {
        auto g = std::make_unique<GbatcPredictor>(add_correction(ae, dataset, config));
        out.correction = g->correction_report();
        out.predictor = std::move(g);
      }
      break;
    }
  }
  out.predictor->set_workers(config.workers);
  return out;
}

std::vector<std::uint8_t> save_model(const Predictor& predictor, const CompressConfig* training) {
  ByteWriter w;
  for (char c : {'G', 'B', 'M', 'D'}) w.u8(static_cast<std::uint8_t>(c));
  w.u16(kModelVersion);
  const auto blob = predictor.serialize();
  w.u32(static_cast<std::uint32_t>(blob.size()));
  w.bytes(blob);
  const AePredictor* ae = as_ae(predictor);
  std::vector<std::uint8_t> enc;
  if (ae != nullptr && ae->can_encode()) enc = ae->encoder().serialize();
  w.u32(static_cast<std::uint32_t>(enc.size()));
  w.bytes(enc);
  const std::string cfg = training != nullptr ? config_to_json(*training) : std::string();
  w.u32(static_cast<std::uint32_t>(cfg.size()));
  w.bytes(std::span(reinterpret_cast<const std::uint8_t*>(cfg.data()), cfg.size()));
  return w.take();
}

namespace {

struct ModelParts {
  std::span<const std::uint8_t> predictor, encoder, config;
};

ModelParts split_model(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, kModule);
  for (char c : {'G', 'B', 'M', 'D'}) {
    if (r.u8() != static_cast<std::uint8_t>(c)) throw Error(ErrorKind::kCorruption, kModule, "not a model file");
  }
  if (r.u16() != kModelVersion) throw Error(ErrorKind::kVersion, kModule, "unsupported model version");
  ModelParts m;
  m.predictor = r.bytes(r.u32());
  m.encoder = r.bytes(r.u32());
  m.config = r.bytes(r.u32());
  r.expect_done();
  return m;
}

}  // namespace

std::optional<CompressConfig> model_training_config(std::span<const std::uint8_t> bytes) {
  const ModelParts m = split_model(bytes);
  if (m.config.empty()) return std::nullopt;
  return config_from_json(std::string_view(reinterpret_cast<const char*>(m.config.data()), m.config.size()));
}

std::unique_ptr<Predictor> load_model(std::span<const std::uint8_t> bytes) {
  const ModelParts m = split_model(bytes);
  auto predictor = deserialize_predictor(m.predictor);
  const auto enc = m.encoder;
  if (!enc.empty()) {
    auto* ae = dynamic_cast<AePredictor*>(predictor.get());
    if (ae == nullptr) throw Error(ErrorKind::kCorruption, kModule, "encoder stored for a non-autoencoder model");
    ae->attach_encoder(nn::Network::deserialize(enc));
  }
  return predictor;
}

// -- verification ---------------------------------------------------------------

VerifyReport verify_blocks(const FieldDataset& original, const FieldDataset& reconstructed,
                           const BlockGeometry& geometry, std::span<const double> tau) {
  if (!(original.dims() == reconstructed.dims())) {
    throw Error(ErrorKind::kShape, kModule, "datasets differ in shape");
  }
  const FieldDims& dims = original.dims();
  if (tau.size() != static_cast<std::size_t>(dims.species)) {
    throw Error(ErrorKind::kShape, kModule, "one tau per species required");
  }
  const BlockGrid grid = block_grid(dims, geometry);
  VerifyReport report;
  for (std::size_t n = 0; n < grid.count(); ++n) {
    const BlockIndex b = grid.at(n);
    const int t1 = std::min(dims.timesteps, (b.t + 1) * geometry.timesteps);
    const int i1 = std::min(dims.height, (b.row + 1) * geometry.rows);
    const int j1 = std::min(dims.width, (b.col + 1) * geometry.cols);
    for (int s = 0; s < dims.species; ++s) {
      double sum = 0.0;
      for (int t = b.t * geometry.timesteps; t < t1; ++t) {
        for (int i = b.row * geometry.rows; i < i1; ++i) {
          for (int j = b.col * geometry.cols; j < j1; ++j) {
            const double d = original.at(s, t, i, j) - reconstructed.at(s, t, i, j);
            sum += d * d;
          }
        }
      }
      const double err = std::sqrt(sum);
      const double limit = block_tau(tau, s);
      ++report.checked;
      report.max_error_ratio = std::max(report.max_error_ratio, err / limit);
      if (err > limit) {
        ++report.violations;
        if (report.first.size() < 16) report.first.push_back({n, s, err, limit});
      }
    }
  }
  return report;
}

// -- compress / decompress ------------------------------------------------------

CompressResult compress(const FieldDataset& dataset, const CompressConfig& config,
                        const Predictor* trained) {
  config.validate();
  const FieldDims& dims = dataset.dims();
  validate_geometry(dims, config.geometry);
  const std::size_t d = config.geometry.block_size();
  const int species = dims.species;

  std::unique_ptr<Predictor> owned;
  const Predictor* predictor = trained;
  if (predictor == nullptr) {
    owned = train_predictor(dataset, config).predictor;
    predictor = owned.get();
  } else {
    if (predictor->species() != species || !(predictor->geometry() == config.geometry)) {
      throw Error(ErrorKind::kShape, kModule, "trained predictor does not match the dataset or geometry");
    }
    owned = clone(*predictor);
    owned->set_workers(config.workers);
    predictor = owned.get();
  }
  if (!predictor->can_encode()) {
    throw Error(ErrorKind::kState, kModule, "predictor cannot encode (model file lacks an encoder)");
  }

  const auto blocks = partition(dataset, config.geometry);
  const std::size_t count = blocks.size();

  ErrorBoundSpec bound = config.bound_mode == BoundMode::kNrmse
                             ? ErrorBoundSpec::from_nrmse(config.bound, dataset.ranges(), d)
                             : ErrorBoundSpec::absolute(config.bound, species);
  std::vector<double> bins;
  for (double t : bound.tau) bins.push_back(default_coefficient_bin(t, d));

  // Latents are quantized before decoding so the compressor sees exactly the
  // reconstruction the decompressor will.
  const QuantizedLatents q = quantize_latents(predictor->encode(blocks), config.latent_bins);
  const std::vector<double> recon = predictor->decode(q.values);
  const std::vector<double> original = flatten(blocks);
  const std::size_t per_block = static_cast<std::size_t>(species) * d;

  std::vector<ResidualBasis> bases;
  for (int s = 0; s < species; ++s) {
    std::vector<double> residual(count * d);
    for (std::size_t b = 0; b < count; ++b) {
      const std::size_t off = b * per_block + static_cast<std::size_t>(s) * d;
      for (std::size_t j = 0; j < d; ++j) residual[b * d + j] = original[off + j] - recon[off + j];
    }
    bases.push_back(to_storage(fit_residual_basis(residual, d, s)));
  }

  std::vector<CorrectionRecord> records(count * static_cast<std::size_t>(species));
  const CorrectOptions options{config.schedule, true};
  parallel_for(records.size(), config.workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) {
      const std::size_t b = r / static_cast<std::size_t>(species);
      const int s = static_cast<int>(r % static_cast<std::size_t>(species));
      const std::size_t off = b * per_block + static_cast<std::size_t>(s) * d;
      try {
        BlockCorrection c = correct_block(std::span(original).subspan(off, d), std::span(recon).subspan(off, d),
                                          bases[static_cast<std::size_t>(s)], bound.tau[static_cast<std::size_t>(s)],
                                          bins[static_cast<std::size_t>(s)], options);
        records[r] = std::move(c.record);
      } catch (const Error& e) {
        throw Error(e.kind(), e.module(), fmt::format("block {} species {}: {}", b, s, e.detail()));
      }
      records[r].block = b;
      records[r].species = s;
    }
  });

  CompressResult result;
  for (const CorrectionRecord& r : records) {
    ++result.stats.records;
    if (!r.empty()) ++result.stats.nonempty_records;
    result.stats.coefficients += r.indices.size();
    result.stats.max_coefficients = std::max(result.stats.max_coefficients, r.indices.size());
  }
  result.stats.blocks = count;
  result.stats.latent_bin = q.bin;

  ArchiveContents contents;
  ArchiveHeader& h = contents.header;
  h.dims = dims;
  h.species_names = dataset.species_names();
  h.geometry = config.geometry;
  h.predictor = predictor->kind();
  h.predictor_spec = config.predictor.str();
  h.bound_mode = bound.mode;
  h.bound_value = bound.value;
  h.tau = bound.tau;
  h.coefficient_bin = bins;
  h.latent_bin = q.bin;
  h.latent_bins = config.latent_bins;
  h.schedule = config.schedule;
  h.truncated_bases = config.truncate_bases;
  h.seed = config.seed;
  h.block_count = count;
  h.config = config_to_json(config);

  contents.predictor = predictor->serialize();
  contents.latents.count = q.values.count;
  contents.latents.length = static_cast<std::uint32_t>(q.values.length);
  if (!q.symbols.empty()) {
    contents.latents.codebook = huffman_build(count_frequencies(q.symbols));
    contents.latents.stream = encode_stream(q.symbols, contents.latents.codebook);
  }
  EncodedRecords enc = encode_records(records, species, d, config.truncate_bases);
  contents.records = std::move(enc.section);
  for (int s = 0; s < species; ++s) {
    contents.bases.push_back(store_basis(bases[static_cast<std::size_t>(s)],
                                         config.truncate_bases ? std::span<const std::uint8_t>(enc.used[static_cast<std::size_t>(s)])
                                                               : std::span<const std::uint8_t>()));
  }

  result.archive = write_archive(contents);
  result.header = h;
  result.size = size_report(result.archive, dims);
  result.ratio = compression_ratio(result.size);

  result.reconstruction = decompress(result.archive, config.workers);
  result.verify = verify_blocks(dataset, result.reconstruction, config.geometry, bound.tau);
  if (!result.verify.ok()) {
    const BlockViolation& v = result.verify.first.front();
    throw Error(ErrorKind::kGuarantee, kModule,
                fmt::format("{} of {} block slices exceed tau; first: block {} species {} error {:.6g} > tau {:.6g}",
                            result.verify.violations, result.verify.checked, v.block, v.species, v.error, v.tau));
  }
  spdlog::info("compressed {} blocks: {} of {} records non-empty, {} coefficients, ratio {:.3f}", count,
               result.stats.nonempty_records, result.stats.records, result.stats.coefficients, result.ratio);
  return result;
}

FieldDataset decompress(std::span<const std::uint8_t> archive, int workers) {
  const ArchiveContents c = read_archive(archive);
  const ArchiveHeader& h = c.header;
  const FieldDims& dims = h.dims;
  const BlockGrid grid = block_grid(dims, h.geometry);
  const std::size_t count = grid.count();
  const std::size_t d = h.geometry.block_size();
  const int species = dims.species;
  if (h.block_count != count || c.latents.count != count) {
    throw Error(ErrorKind::kValidation, "archive", "block count disagrees with the header geometry");
  }

  auto predictor = deserialize_predictor(c.predictor);
  if (predictor->species() != species || !(predictor->geometry() == h.geometry) ||
      predictor->kind() != h.predictor || predictor->latent_size() != c.latents.length) {
    throw Error(ErrorKind::kValidation, "archive", "predictor section disagrees with the header");
  }
  predictor->set_workers(workers);

  LatentBatch latents{count, c.latents.length, {}};
  const std::size_t symbols = count * c.latents.length;
  if (symbols > 0) {
    if (c.latents.codebook.empty() || !(h.latent_bin > 0.0)) {
      throw Error(ErrorKind::kCorruption, "archive", "latent section has no codebook");
    }
    latents.values = dequantize(decode_stream(c.latents.stream, c.latents.codebook, symbols), h.latent_bin);
  } else if (c.latents.stream.bit_length != 0) {
    throw Error(ErrorKind::kCorruption, "archive", "latent stream present for an empty latent space");
  }
  const std::vector<double> recon = predictor->decode(latents);

  std::vector<ResidualBasis> bases;
  for (int s = 0; s < species; ++s) bases.push_back(load_basis(c.bases[static_cast<std::size_t>(s)], s));
  const std::vector<CorrectionRecord> records = decode_records(c.records, count, species, d);
  for (const CorrectionRecord& r : records) {
    const auto& present = c.bases[static_cast<std::size_t>(r.species)].present;
    for (std::uint32_t k : r.indices) {
      if (!present.empty() && present[k] == 0) {
        throw Error(ErrorKind::kCorruption, "archive", "record selects a basis column that was not stored");
      }
    }
  }

  std::vector<BlockInstance> blocks(count);
  const std::size_t per_block = static_cast<std::size_t>(species) * d;
  parallel_for(count, workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t b = begin; b < end; ++b) {
      BlockInstance& out = blocks[b];
      out.index = grid.at(b);
      out.species = species;
      out.geometry = h.geometry;
      out.values.resize(per_block);
      for (int s = 0; s < species; ++s) {
        const std::size_t off = b * per_block + static_cast<std::size_t>(s) * d;
        const auto xg = apply_correction(std::span(recon).subspan(off, d), bases[static_cast<std::size_t>(s)],
                                         records[b * static_cast<std::size_t>(species) + static_cast<std::size_t>(s)],
                                         h.coefficient_bin[static_cast<std::size_t>(s)]);
        std::copy(xg.begin(), xg.end(), out.values.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(s) * d));
      }
    }
  });
  return round_to_storage(reassemble(blocks, h.geometry, dims, h.species_names));
}

// -- benchmark ------------------------------------------------------------------

std::vector<BenchCell> bench(const FieldDataset& dataset, std::span<const PredictorChoice> predictors,
                             std::span<const double> targets, const CompressConfig& base) {
  std::vector<BenchCell> cells;
  const QoiSpec minor = qoi_minor_like(dataset);
  const QoiSpec major = qoi_major_like(dataset);
  const FieldDataset qoi_minor_ref = qoi_field(dataset, minor);
  const FieldDataset qoi_major_ref = qoi_field(dataset, major);
  std::optional<AePredictor> shared_ae;

  for (const PredictorChoice& choice : predictors) {
    CompressConfig cfg = base;
    cfg.predictor = choice;
    std::unique_ptr<Predictor> trained;
    std::string train_error;
    try {
      cfg.validate();
      if (choice.kind == PredictorKind::kGba || choice.kind == PredictorKind::kGbatc) {
        if (!shared_ae) {
          CompressConfig ae_cfg = cfg;
          ae_cfg.predictor = {PredictorKind::kGba, 0};
          auto p = train_predictor(dataset, ae_cfg).predictor;
          shared_ae = *static_cast<AePredictor*>(p.get());
        }
        if (choice.kind == PredictorKind::kGba) {
          trained = std::make_unique<AePredictor>(*shared_ae);
        } else {
          trained = std::make_unique<GbatcPredictor>(add_correction(*shared_ae, dataset, cfg));
        }
      } else {
        trained = train_predictor(dataset, cfg).predictor;
      }
    } catch (const std::exception& e) {
      train_error = e.what();
    }
    for (double target : targets) {
      BenchCell cell;
      cell.predictor = choice.str();
      cell.target = target;
      if (!train_error.empty()) {
        cell.error = train_error;
        cells.push_back(cell);
        continue;
      }
      try {
        cfg.bound = target;
        const CompressResult r = compress(dataset, cfg, trained.get());
        cell.ratio = r.ratio;
        cell.achieved_nrmse = mean_nrmse(dataset, r.reconstruction);
        cell.max_error_ratio = r.verify.max_error_ratio;
        cell.qoi_nrmse_minor = mean_nrmse(qoi_minor_ref, qoi_field(r.reconstruction, minor));
        cell.qoi_nrmse_major = mean_nrmse(qoi_major_ref, qoi_field(r.reconstruction, major));
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
      spdlog::info("bench {} target {:.3g}: ratio {:.3f} nrmse {:.3e}{}", cell.predictor, target, cell.ratio,
                   cell.achieved_nrmse, cell.error.empty() ? "" : " error: " + cell.error);
      cells.push_back(cell);
    }
  }
  return cells;
}

void write_bench_csv(std::ostream& out, std::span<const BenchCell> cells) {
  out << "predictor,target_nrmse,achieved_nrmse,ratio,qoi_nrmse_minor,qoi_nrmse_major,max_error_ratio,error\n";
  for (const BenchCell& c : cells) {
    std::string err = c.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    out << fmt::format("{},{:.6g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{}\n", c.predictor, c.target,
                       c.achieved_nrmse, c.ratio, c.qoi_nrmse_minor, c.qoi_nrmse_major, c.max_error_ratio, err);
  }
}

}  // namespace gbatc
