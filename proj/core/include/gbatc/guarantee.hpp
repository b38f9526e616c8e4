#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gbatc/field.hpp"
#include "gbatc/linalg.hpp"

namespace gbatc {

// Per-species basis for the prediction residual. Columns of `vectors` are
// eigenvectors of the uncentred residual covariance, by descending
// eigenvalue. `analysis` maps a residual to basis coefficients: the transpose
// for an exact orthonormal basis, the inverse once the basis has been rounded
// to its stored float32 form.
struct ResidualBasis {
  int species = 0;
  std::size_t dimension = 0;
  Matrix vectors;
  std::vector<double> eigenvalues;
  Matrix analysis;
  bool degenerate = false;  // every residual was zero; identity returned
  bool stored = false;      // vectors are exactly representable in float32
};

// rows: count x D residual vectors. Zero rows -> kInvalidInput.
ResidualBasis fit_residual_basis(std::span<const double> residuals, std::size_t dimension,
                                 int species = 0);

// Rounds the vectors to float32 and recomputes `analysis` as their inverse.
ResidualBasis to_storage(const ResidualBasis& basis);
// Wraps a D x D matrix read back from an archive.
ResidualBasis stored_basis(Matrix vectors, int species);

// Basis coefficients of a residual.
std::vector<double> project(const ResidualBasis& basis, std::span<const double> residual);

enum class BoundMode : std::uint8_t { kAbsolute = 0, kNrmse = 1 };

std::string to_string(BoundMode mode);

// Per-species l2 bound on every block slice. From a target NRMSE eps,
// tau_s = eps * (max_s - min_s) * sqrt(D); a constant species uses unit range.
struct ErrorBoundSpec {
  BoundMode mode = BoundMode::kNrmse;
  double value = 1e-3;
  std::vector<double> tau;

  static ErrorBoundSpec absolute(double tau, int species);
  static ErrorBoundSpec from_nrmse(double eps, std::span<const SpeciesRange> ranges,
                                   std::size_t dimension);
  // kInvalidSpec unless every tau is finite and > 0.
  void validate() const;
};

// Default coefficient bin tau / (2 sqrt(D)).
double default_coefficient_bin(double tau, std::size_t dimension);

enum class Schedule : std::uint8_t { kStepwise = 0, kFast = 1 };

std::string to_string(Schedule schedule);

// Selected basis columns in ascending order with their quantized
// coefficients, index i pairing with coefficients[i].
struct CorrectionRecord {
  std::size_t block = 0;
  int species = 0;
  std::vector<std::uint32_t> indices;
  std::vector<std::int64_t> coefficients;

  bool empty() const { return indices.empty(); }
  friend bool operator==(const CorrectionRecord&, const CorrectionRecord&) = default;
};

struct CorrectOptions {
  Schedule schedule = Schedule::kStepwise;
  // Measure the error after rounding the corrected block to float32, the
  // precision decompressed fields are written at.
  bool round_output = false;
};

struct BlockCorrection {
  std::vector<double> corrected;
  CorrectionRecord record;
  double error = 0.0;  // final ||x - x^G||
};

// Greedy selection over coefficients sorted by c^2 descending (ties to the
// lower index), quantized with bin d_c, adding one coefficient per step until
// the l2 error is within tau.
// d_c > tau / sqrt(D) -> kConfiguration; no M <= D reaches tau -> kGuarantee.
BlockCorrection correct_block(std::span<const double> x, std::span<const double> reconstructed,
                              const ResidualBasis& basis, double tau, double bin,
                              const CorrectOptions& options = {});

// x^G = xR + sum over the record (ascending index) of U[:, k] * q_k * d_c.
// Index >= D or mismatched lengths -> kCorruption.
std::vector<double> apply_correction(std::span<const double> reconstructed,
                                     const ResidualBasis& basis, const CorrectionRecord& record,
                                     double bin);

// Coefficient order used by the greedy loop.
std::vector<std::uint32_t> greedy_order(std::span<const double> coefficients);

}  // namespace gbatc
