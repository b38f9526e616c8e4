#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "gbatc/field.hpp"

namespace gbatc {

// RMSE over the span divided by `range`. With range 0 the result is 0 for
// identical inputs and NaN otherwise.
double nrmse(std::span<const double> original, std::span<const double> reconstructed, double range);
// Species s of two datasets, normalized by the original's global range.
double nrmse(const FieldDataset& original, const FieldDataset& reconstructed, int species);
// Arithmetic mean of the per-species NRMSE.
double mean_nrmse(const FieldDataset& original, const FieldDataset& reconstructed);

// 20 log10(range / RMSE); +inf for identical inputs, NaN for a zero range.
double psnr(std::span<const double> original, std::span<const double> reconstructed, double range);

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

// Mean local SSIM over every fully contained Gaussian window of an H x W
// frame. `range` sets C1 = (k1 range)^2 and C2 = (k2 range)^2; a zero range
// is treated as 1. Frames smaller than the window -> kInvalidInput.
double ssim(std::span<const double> a, std::span<const double> b, int height, int width,
            double range, const SsimParams& params = {});

// Normalized 1D Gaussian taps; the 2D window is their outer product.
std::vector<double> gaussian_taps(int window, double sigma);

// Arrhenius-style rate per output:
//   A * u^b * exp(-E / u) * prod_j x_j^nu_j,  u = offset + scale * x_T.
struct QoiOutput {
  double a = 1.0;
  double b = 0.0;
  double e = 0.0;
  std::vector<double> nu;  // one exponent per species; empty means all zero
};

struct QoiSpec {
  std::string name;
  int temperature_channel = 0;
  double offset = 1.0;
  double scale = 1.0;
  std::vector<QoiOutput> outputs;
};

// Negative bases raised to a fractional power, and non-positive u, are
// clamped to zero; each clamp increments `clamped` when non-null.
std::vector<double> qoi_rates(std::span<const double> point, const QoiSpec& spec,
                              std::uint64_t* clamped = nullptr);
// Rates at every grid point; output species = spec.outputs.
FieldDataset qoi_field(const FieldDataset& dataset, const QoiSpec& spec,
                       std::uint64_t* clamped = nullptr);

// One rate per species, first order in that species, with u falling from 2
// to 1 across the surrogate channel's range. The minor-like preset has a high
// activation energy (E = 24) so rates respond exponentially to u; the
// major-like preset has E = 1.
QoiSpec qoi_minor_like(const FieldDataset& reference, int temperature_channel = 0);
QoiSpec qoi_major_like(const FieldDataset& reference, int temperature_channel = 0);

struct SpeciesStatistic {
  int species = 0;
  int timestep = 0;
  double mean = 0.0;
  double stddev = 0.0;  // population
};

std::vector<SpeciesStatistic> species_statistics(const FieldDataset& dataset);

struct FidelityReport {
  std::vector<std::string> species_names;
  std::vector<double> nrmse;
  double mean_nrmse = 0.0;
  std::vector<std::vector<double>> psnr;  // [species][timestep]
  std::vector<std::vector<double>> ssim;  // [species][timestep]; empty if frames < window
  std::optional<std::vector<double>> qoi_nrmse;
  std::optional<double> qoi_mean_nrmse;
  std::uint64_t qoi_clamped = 0;
  SsimParams ssim_params;
};

FidelityReport fidelity_report(const FieldDataset& original, const FieldDataset& reconstructed,
                               const QoiSpec* qoi = nullptr);

// One JSON object per line: {"species", "metric", "value", "timestep"?}.
void write_jsonl(std::ostream& out, const FidelityReport& report);
// Header "species,metric,value,timestep"; timestep empty for whole-run values.
void write_csv(std::ostream& out, const FidelityReport& report);
void write_statistics_csv(std::ostream& out, const FieldDataset& dataset,
                          std::span<const SpeciesStatistic> stats);

}  // namespace gbatc
