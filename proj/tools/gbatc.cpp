#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"

#include "gbatc/archive.hpp"
#include "gbatc/error.hpp"
#include "gbatc/field.hpp"
#include "gbatc/field_io.hpp"
#include "gbatc/metrics.hpp"
#include "gbatc/pipeline.hpp"

namespace {

using namespace gbatc;

constexpr int kExitError = 1;
constexpr int kExitViolation = 2;

struct RunOptions {
  std::string geometry = "5,4,4";
  std::string remainder = "drop";
  std::string predictor = "gbatc";
  int latent = 36;
  int epochs = 300;
  int correction_epochs = 60;
  int batch = 64;
  double lr = 1e-3;
  double nrmse = 0.0;
  double tau = 0.0;
  int latent_bins = 4096;
  std::uint64_t seed = 0;
  std::string schedule = "stepwise";
  bool truncate_bases = false;
  int workers = 1;
};

BlockGeometry parse_geometry(const std::string& text, const std::string& remainder) {
  std::vector<int> v;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stoi(part, &used));
      if (used != part.size()) v.back() = 0;
    } catch (const std::exception&) {
      v.push_back(0);
    }
  }
  if (v.size() != 3 || v[0] < 1 || v[1] < 1 || v[2] < 1) {
    throw Error(ErrorKind::kInvalidGeometry, "cli", "geometry must be K,N1,N2 positive integers, got '" + text + "'");
  }
  return {v[0], v[1], v[2], remainder == "pad" ? RemainderPolicy::kPadReplicate : RemainderPolicy::kDrop};
}

CompressConfig build_config(const RunOptions& o, bool need_target) {
  CompressConfig c;
  c.geometry = parse_geometry(o.geometry, o.remainder);
  c.predictor = PredictorChoice::parse(o.predictor);
  c.ae.latent = o.latent;
  c.ae.train.epochs = o.epochs;
  c.ae.train.batch_size = o.batch;
  c.ae.train.learning_rate = o.lr;
  c.correction.epochs = o.correction_epochs;
  c.correction.batch_size = o.batch;
  c.correction.learning_rate = o.lr;
  if (need_target) {
    if ((o.nrmse > 0.0) == (o.tau > 0.0)) {
      throw Error(ErrorKind::kInvalidSpec, "cli", "give exactly one of --nrmse or --tau");
    }
    c.bound_mode = o.nrmse > 0.0 ? BoundMode::kNrmse : BoundMode::kAbsolute;
    c.bound = o.nrmse > 0.0 ? o.nrmse : o.tau;
  }
  c.latent_bins = o.latent_bins;
  c.schedule = o.schedule == "fast" ? Schedule::kFast : Schedule::kStepwise;
  c.truncate_bases = o.truncate_bases;
  c.seed = o.seed;
  c.workers = o.workers;
  c.validate();
  return c;
}

void add_model_options(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("--geometry", o.geometry, "Block extents K,N1,N2")->capture_default_str();
  cmd->add_option("--remainder", o.remainder, "Remainder policy")
      ->check(CLI::IsMember({"drop", "pad"}))
      ->capture_default_str();
  cmd->add_option("--predictor", o.predictor, "zero | pca:R | gba | gbatc")->capture_default_str();
  cmd->add_option("--latent", o.latent, "Autoencoder latent size")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--epochs", o.epochs, "Autoencoder training epochs")->check(CLI::NonNegativeNumber)->capture_default_str();
  cmd->add_option("--correction-epochs", o.correction_epochs, "Tensor correction training epochs")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd->add_option("--batch", o.batch, "Minibatch size")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--lr", o.lr, "Adam learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--latent-bins", o.latent_bins, "Latent quantization bins over the latent range")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--seed", o.seed, "Training seed")->capture_default_str();
  cmd->add_option("--workers", o.workers, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
}

void add_target_options(CLI::App* cmd, RunOptions& o) {
  auto* n = cmd->add_option("--nrmse", o.nrmse, "Target NRMSE; tau_s = eps * range_s * sqrt(D)")->check(CLI::PositiveNumber);
  auto* t = cmd->add_option("--tau", o.tau, "Absolute per-block l2 bound")->check(CLI::PositiveNumber);
  n->excludes(t);
  cmd->add_option("--schedule", o.schedule, "Coefficient search schedule")
      ->check(CLI::IsMember({"stepwise", "fast"}))
      ->capture_default_str();
  cmd->add_flag("--truncate-bases", o.truncate_bases, "Store only residual basis columns some record selects");
}

void print_size(const SizeReport& size, double ratio) {
  std::cout << fmt::format("{:<10}{:>14}\n", "section", "bytes");
  std::cout << fmt::format("{:<10}{:>14}\n", "table", size.table_bytes);
  for (const auto& [name, bytes] : size.sections) std::cout << fmt::format("{:<10}{:>14}\n", name, bytes);
  std::cout << fmt::format("{:<10}{:>14}\n", "total", size.compressed_bytes());
  std::cout << fmt::format("{:<10}{:>14}\n", "raw", size.raw_bytes);
  std::cout << fmt::format("ratio {:.4f}\n", ratio);
}

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("gbatc");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* level = std::getenv("GBATC_LOG");
  spdlog::set_level(level != nullptr ? spdlog::level::from_str(level) : spdlog::level::info);
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"Error-bounded lossy compressor for multi-species spatiotemporal fields"};
  app.require_subcommand(1);

  RunOptions run;

  // synthesize
  auto* synth = app.add_subcommand("synthesize", "Write a synthetic multi-species field");
  std::string synth_out;
  SynthSpec spec;
  spec.dims = {4, 10, 64, 64};
  std::uint64_t synth_seed = 0;
  synth->add_option("--output,-o", synth_out, "Output field path")->required();
  synth->add_option("--species", spec.dims.species)->capture_default_str();
  synth->add_option("--timesteps", spec.dims.timesteps)->capture_default_str();
  synth->add_option("--height", spec.dims.height)->capture_default_str();
  synth->add_option("--width", spec.dims.width)->capture_default_str();
  synth->add_option("--kernels", spec.kernels, "Gaussian kernels in the base field")->capture_default_str();
  synth->add_option("--low-rank", spec.low_rank_fields, "Build species from this many shared modes instead")
      ->capture_default_str();
  synth->add_option("--seed", synth_seed)->capture_default_str();

  // train
  auto* train = app.add_subcommand("train", "Train a predictor and save it as a model file");
  std::string train_in, train_model;
  train->add_option("--input,-i", train_in, "Field path")->required()->check(CLI::ExistingFile);
  train->add_option("--model,-m", train_model, "Output model path")->required();
  add_model_options(train, run);

  // compress
  auto* comp = app.add_subcommand("compress", "Compress a field into an archive");
  std::string comp_in, comp_out, comp_model;
  comp->add_option("--input,-i", comp_in, "Field path")->required()->check(CLI::ExistingFile);
  comp->add_option("--output,-o", comp_out, "Archive path")->required();
  comp->add_option("--model,-m", comp_model, "Reuse a trained model file")->check(CLI::ExistingFile);
  add_model_options(comp, run);
  add_target_options(comp, run);

  // decompress
  auto* decomp = app.add_subcommand("decompress", "Reconstruct a field from an archive");
  std::string decomp_in, decomp_out;
  decomp->add_option("--input,-i", decomp_in, "Archive path")->required()->check(CLI::ExistingFile);
  decomp->add_option("--output,-o", decomp_out, "Output field path")->required();
  decomp->add_option("--workers", run.workers)->check(CLI::PositiveNumber);

  // verify
  auto* ver = app.add_subcommand("verify", "Check every block of an archive against its bound");
  std::string ver_orig, ver_archive, ver_jsonl, ver_csv;
  ver->add_option("--original", ver_orig, "Original field path")->required()->check(CLI::ExistingFile);
  ver->add_option("--archive", ver_archive, "Archive path")->required()->check(CLI::ExistingFile);
  ver->add_option("--jsonl", ver_jsonl, "Write a line-delimited fidelity report");
  ver->add_option("--csv", ver_csv, "Write a CSV fidelity report");
  ver->add_option("--workers", run.workers)->check(CLI::PositiveNumber);

  // bench
  auto* bch = app.add_subcommand("bench", "Rate/distortion table over predictors and targets");
  std::string bench_in, bench_csv;
  std::vector<std::string> bench_predictors{"pca:4", "gba", "gbatc"};
  std::vector<double> bench_targets{1e-2, 3e-3, 1e-3};
  bch->add_option("--input,-i", bench_in, "Field path")->required()->check(CLI::ExistingFile);
  bch->add_option("--predictors", bench_predictors, "Predictors to compare")->delimiter(',')->capture_default_str();
  bch->add_option("--targets", bench_targets, "Target NRMSE values")->delimiter(',')->capture_default_str();
  bch->add_option("--csv", bench_csv, "Write the table here instead of stdout");
  add_model_options(bch, run);
  bch->add_option("--schedule", run.schedule)->check(CLI::IsMember({"stepwise", "fast"}));

  // stats
  auto* st = app.add_subcommand("stats", "Per-timestep mean and standard deviation per species");
  std::string stats_in;
  st->add_option("--input,-i", stats_in, "Field path")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      const FieldDataset data = round_to_storage(synthesize(spec, synth_seed));
      write_field(synth_out, data);
      spdlog::info("wrote {} species x {} x {} x {} to {}", spec.dims.species, spec.dims.timesteps,
                   spec.dims.height, spec.dims.width, synth_out);
    } else if (train->parsed()) {
      const FieldDataset data = read_field(train_in);
      const CompressConfig cfg = build_config(run, false);
      const TrainedPredictor t = train_predictor(data, cfg);
      write_bytes_atomic(train_model, save_model(*t.predictor, &cfg));
      std::cout << fmt::format("predictor {}\n", cfg.predictor.str());
      if (t.ae) std::cout << fmt::format("ae_loss {:.6e} -> {:.6e}\n", t.ae->initial_loss, t.ae->final_loss);
      if (t.correction) {
        std::cout << fmt::format("correction_mse {:.6e} -> {:.6e} ({})\n", t.correction->raw_mse,
                                 t.correction->final_mse, t.correction->active ? "active" : "bypassed");
      }
    } else if (comp->parsed()) {
      const FieldDataset data = read_field(comp_in);
      CompressConfig cfg = build_config(run, true);
      std::unique_ptr<Predictor> model;
      if (!comp_model.empty()) {
        const auto bytes = read_bytes(comp_model);
        model = load_model(bytes);
        if (const auto trained = model_training_config(bytes)) {
          // The header must describe how the predictor was trained so the
          // stamped config reproduces the archive.
          cfg.geometry = trained->geometry;
          cfg.predictor = trained->predictor;
          cfg.ae = trained->ae;
          cfg.correction = trained->correction;
          cfg.seed = trained->seed;
        } else if (model->kind() != cfg.predictor.kind) {
          spdlog::warn("model file holds a {} predictor; --predictor ignored", to_string(model->kind()));
          cfg.predictor.kind = model->kind();
          if (auto* pca = dynamic_cast<PcaPredictor*>(model.get())) cfg.predictor.rank = pca->rank();
        }
      }
      const CompressResult r = compress(data, cfg, model.get());
      write_bytes_atomic(comp_out, r.archive);
      print_size(r.size, r.ratio);
      std::cout << fmt::format("blocks {} records {} nonempty {} coefficients {}\n", r.stats.blocks,
                               r.stats.records, r.stats.nonempty_records, r.stats.coefficients);
      std::cout << fmt::format("verified {} block slices, max error/tau {:.6f}\n", r.verify.checked,
                               r.verify.max_error_ratio);
    } else if (decomp->parsed()) {
      write_field(decomp_out, decompress(read_bytes(decomp_in), run.workers));
    } else if (ver->parsed()) {
      const FieldDataset original = read_field(ver_orig);
      const auto bytes = read_bytes(ver_archive);
      const ArchiveContents c = read_archive(bytes);
      const FieldDataset recon = decompress(bytes, run.workers);
      const VerifyReport v = verify_blocks(original, recon, c.header.geometry, c.header.tau);
      const FidelityReport f = fidelity_report(original, recon);
      if (!ver_jsonl.empty()) {
        std::ofstream out(ver_jsonl);
        write_jsonl(out, f);
      }
      if (!ver_csv.empty()) {
        std::ofstream out(ver_csv);
        write_csv(out, f);
      }
      print_size(size_report(bytes, c.header.dims), compression_ratio(size_report(bytes, c.header.dims)));
      std::cout << fmt::format("mean_nrmse {:.6e}\n", f.mean_nrmse);
      std::cout << fmt::format("checked {} violations {} max error/tau {:.6f}\n", v.checked, v.violations,
                               v.max_error_ratio);
      for (const BlockViolation& b : v.first) {
        std::cout << fmt::format("violation block {} species {} error {:.6g} tau {:.6g}\n", b.block,
                                 b.species, b.error, b.tau);
      }
      return v.ok() ? 0 : kExitViolation;
    } else if (bch->parsed()) {
      const FieldDataset data = read_field(bench_in);
      CompressConfig cfg = build_config(run, false);
      std::vector<PredictorChoice> choices;
      for (const auto& p : bench_predictors) choices.push_back(PredictorChoice::parse(p));
      const auto cells = bench(data, choices, bench_targets, cfg);
      if (bench_csv.empty()) {
        write_bench_csv(std::cout, cells);
      } else {
        std::ostringstream out;
        write_bench_csv(out, cells);
        const std::string s = out.str();
        write_bytes_atomic(bench_csv, std::vector<std::uint8_t>(s.begin(), s.end()));
      }
    } else if (st->parsed()) {
      const FieldDataset data = read_field(stats_in);
      write_statistics_csv(std::cout, data, species_statistics(data));
    }
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return 0;
}
