#include "gbatc/guarantee.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gbatc/codec.hpp"
#include "gbatc/error.hpp"

namespace gbatc {
namespace {

constexpr const char* kModule = "guarantee";

double l2_error(std::span<const double> x, std::span<const double> y, bool round_output) {
  double sum = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double v = round_output ? static_cast<double>(static_cast<float>(y[j])) : y[j];
    const double d = x[j] - v;
    sum += d * d;
  }
  return std::sqrt(sum);
}

// Shared by compression and decompression so both sides produce identical
// bits for the same record.
void accumulate(std::span<double> out, const Matrix& u, std::span<const std::uint32_t> indices,
                std::span<const std::int64_t> coefficients, double bin) {
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const double c = dequantize(coefficients[i], bin);
    const std::size_t k = indices[i];
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += u(j, k) * c;
  }
}

void finish_analysis(ResidualBasis& b) {
  if (!invert(b.vectors, b.analysis)) b.analysis = b.vectors.transposed();
}

}  // namespace

ResidualBasis fit_residual_basis(std::span<const double> residuals, std::size_t dimension,
                                 int species) {
  if (dimension == 0 || residuals.empty() || residuals.size() % dimension != 0) {
    throw Error(ErrorKind::kInvalidInput, kModule, "need at least one residual vector of length D");
  }
  const std::size_t count = residuals.size() / dimension;
  ResidualBasis b;
  b.species = species;
  b.dimension = dimension;
  Matrix cov = outer_product_sum(residuals, dimension);
  const bool zero = std::all_of(cov.data.begin(), cov.data.end(), [](double v) { return v == 0.0; });
  if (zero) {
    b.vectors = Matrix::identity(dimension);
    b.eigenvalues.assign(dimension, 0.0);
    b.degenerate = true;
  } else {
    for (double& v : cov.data) v /= static_cast<double>(count);
    SymmetricEigen eig = symmetric_eigen(std::move(cov));
    b.vectors = std::move(eig.vectors);
    b.eigenvalues = std::move(eig.values);
  }
  b.analysis = b.vectors.transposed();
  return b;
}

ResidualBasis to_storage(const ResidualBasis& basis) {
  ResidualBasis b = basis;
  for (double& v : b.vectors.data) v = static_cast<double>(static_cast<float>(v));
  b.stored = true;
  finish_analysis(b);
  return b;
}

ResidualBasis stored_basis(Matrix vectors, int species) {
  if (vectors.rows != vectors.cols || vectors.rows == 0) {
    throw Error(ErrorKind::kCorruption, kModule, "residual basis must be square");
  }
  ResidualBasis b;
  b.species = species;
  b.dimension = vectors.rows;
  b.vectors = std::move(vectors);
  b.stored = true;
  finish_analysis(b);
  return b;
}

std::vector<double> project(const ResidualBasis& basis, std::span<const double> residual) {
  const std::size_t d = basis.dimension;
  std::vector<double> c(d, 0.0);
  for (std::size_t k = 0; k < d; ++k) {
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) acc += basis.analysis(k, j) * residual[j];
    c[k] = acc;
  }
  return c;
}

std::string to_string(BoundMode mode) { return mode == BoundMode::kAbsolute ? "absolute" : "nrmse"; }

std::string to_string(Schedule schedule) { return schedule == Schedule::kStepwise ? "stepwise" : "fast"; }

ErrorBoundSpec ErrorBoundSpec::absolute(double tau, int species) {
  ErrorBoundSpec spec{BoundMode::kAbsolute, tau, std::vector<double>(static_cast<std::size_t>(species), tau)};
  spec.validate();
  return spec;
}

ErrorBoundSpec ErrorBoundSpec::from_nrmse(double eps, std::span<const SpeciesRange> ranges,
                                          std::size_t dimension) {
  ErrorBoundSpec spec{BoundMode::kNrmse, eps, {}};
  const double root_d = std::sqrt(static_cast<double>(dimension));
  for (const SpeciesRange& r : ranges) {
    const double range = r.span() > 0.0 ? r.span() : 1.0;
    spec.tau.push_back(eps * range * root_d);
  }
  spec.validate();
  return spec;
}

void ErrorBoundSpec::validate() const {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw Error(ErrorKind::kInvalidSpec, kModule, "error bound must be positive and finite");
  }
  for (double t : tau) {
    if (!(t > 0.0) || !std::isfinite(t)) {
      throw Error(ErrorKind::kInvalidSpec, kModule, "tau must be positive and finite");
    }
  }
}

double default_coefficient_bin(double tau, std::size_t dimension) {
  return tau / (2.0 * std::sqrt(static_cast<double>(dimension)));
}

std::vector<std::uint32_t> greedy_order(std::span<const double> coefficients) {
  std::vector<std::uint32_t> order(coefficients.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return coefficients[a] * coefficients[a] > coefficients[b] * coefficients[b];
  });
  return order;
}

BlockCorrection correct_block(std::span<const double> x, std::span<const double> reconstructed,
                              const ResidualBasis& basis, double tau, double bin,
                              const CorrectOptions& options) {
  const std::size_t d = basis.dimension;
  if (x.size() != d || reconstructed.size() != d) {
    throw Error(ErrorKind::kShape, kModule, "block slice length does not match the basis");
  }
  if (!(tau > 0.0) || !(bin > 0.0)) {
    throw Error(ErrorKind::kInvalidSpec, kModule, "tau and coefficient bin must be positive");
  }
  if (bin > tau / std::sqrt(static_cast<double>(d))) {
    throw Error(ErrorKind::kConfiguration, kModule,
                "coefficient bin exceeds tau / sqrt(D); the correction loop may not terminate");
  }

  BlockCorrection out;
  out.corrected.assign(reconstructed.begin(), reconstructed.end());
  out.error = l2_error(x, out.corrected, options.round_output);
  if (out.error <= tau) return out;

  std::vector<double> residual(d);
  for (std::size_t j = 0; j < d; ++j) residual[j] = x[j] - reconstructed[j];
  const std::vector<double> c = project(basis, residual);
  const std::vector<std::uint32_t> order = greedy_order(c);

  std::vector<std::uint32_t> indices;
  std::vector<std::int64_t> coeffs;
  std::vector<double> candidate(d);
  auto attempt = [&](std::size_t m) {
    indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m));
    std::sort(indices.begin(), indices.end());
    coeffs.resize(m);
    for (std::size_t i = 0; i < m; ++i) coeffs[i] = quantize(c[indices[i]], bin);
    std::copy(reconstructed.begin(), reconstructed.end(), candidate.begin());
    accumulate(candidate, basis.vectors, indices, coeffs, bin);
    return l2_error(x, candidate, options.round_output);
  };
  auto accept = [&](double err) {
    out.corrected = candidate;
    out.record.indices = indices;
    out.record.coefficients = coeffs;
    out.error = err;
  };

  if (options.schedule == Schedule::kStepwise) {
    for (std::size_t m = 1; m <= d; ++m) {
      const double err = attempt(m);
      if (err <= tau) {
        accept(err);
        return out;
      }
    }
  } else {
    // Doubling to the first passing M, then bisection between the last
    // failing and first passing counts.
    std::size_t lo = 0;
    std::size_t hi = 0;
    for (std::size_t m = 1;; m = std::min(d, m * 2)) {
      if (attempt(m) <= tau) {
        hi = m;
        break;
      }
      lo = m;
      if (m == d) break;
    }
    if (hi != 0) {
      while (hi - lo > 1) {
        const std::size_t mid = lo + (hi - lo) / 2;
        if (attempt(mid) <= tau) {
          hi = mid;
        } else {
          lo = mid;
        }
      }
      accept(attempt(hi));
      return out;
    }
  }
  throw Error(ErrorKind::kGuarantee, kModule,
              "no coefficient count reaches tau = " + std::to_string(tau));
}

std::vector<double> apply_correction(std::span<const double> reconstructed,
                                     const ResidualBasis& basis, const CorrectionRecord& record,
                                     double bin) {
  if (reconstructed.size() != basis.dimension) {
    throw Error(ErrorKind::kShape, kModule, "block slice length does not match the basis");
  }
  if (record.indices.size() != record.coefficients.size()) {
    throw Error(ErrorKind::kCorruption, kModule, "record index and coefficient counts differ");
  }
  for (std::uint32_t k : record.indices) {
    if (k >= basis.dimension) {
      throw Error(ErrorKind::kCorruption, kModule, "record index " + std::to_string(k) + " out of range");
    }
  }
  std::vector<double> out(reconstructed.begin(), reconstructed.end());
  accumulate(out, basis.vectors, record.indices, record.coefficients, bin);
  return out;
}

}  // namespace gbatc
