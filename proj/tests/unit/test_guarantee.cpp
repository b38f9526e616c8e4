#include <Eigen/Dense>

#include <cmath>

#include "gbatc/guarantee.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace gbatc;

namespace {

// Exact orthonormal basis from random residuals.
ResidualBasis random_basis(std::size_t d, std::mt19937_64& gen) {
  const auto r = test::random_vector(d * (d + 5), gen);
  return fit_residual_basis(r, d);
}

double norm(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace

TEST(ResidualBasis, RankOneDirection) {
  const std::size_t d = 6;
  std::vector<double> v{1, -2, 0, 3, 1, 1};
  double n = 0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  std::vector<double> rows;
  for (double s : {0.5, -2.0, 3.0, 1.0}) {
    for (double x : v) rows.push_back(s * x);
  }
  const ResidualBasis b = fit_residual_basis(rows, d);
  EXPECT_FALSE(b.degenerate);
  for (std::size_t j = 0; j < d; ++j) EXPECT_NEAR(std::abs(b.vectors(j, 0)), std::abs(v[j] / n), 1e-12);
  for (std::size_t k = 1; k < d; ++k) EXPECT_NEAR(b.eigenvalues[k], 0.0, 1e-12);
}

TEST(ResidualBasis, UncentredCovarianceMatchesEigen) {
  std::mt19937_64 gen(2);
  const std::size_t d = 10, count = 4000;
  std::normal_distribution<double> nd;
  std::vector<double> rows(d * count);
  for (double& x : rows) x = nd(gen);
  const ResidualBasis b = fit_residual_basis(rows, d);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = 0; j < d; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i * d + j];
  }
  const Eigen::MatrixXd cov = m.transpose() * m / static_cast<double>(count);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ref(cov);
  for (std::size_t k = 0; k < d; ++k) {
    EXPECT_NEAR(b.eigenvalues[k], ref.eigenvalues()(static_cast<Eigen::Index>(d - 1 - k)), 1e-10);
  }
  // isotropic samples: eigenvalues near the unit variance
  EXPECT_LT(b.eigenvalues.front() / b.eigenvalues.back(), 1.4);
}

TEST(ResidualBasis, DegenerateIdentity) {
  const ResidualBasis b = fit_residual_basis(std::vector<double>(40, 0.0), 8);
  EXPECT_TRUE(b.degenerate);
  EXPECT_EQ(b.vectors, Matrix::identity(8));
  EXPECT_KIND(fit_residual_basis(std::vector<double>{}, 8), ErrorKind::kInvalidInput);
  EXPECT_KIND(fit_residual_basis(std::vector<double>(7, 1.0), 8), ErrorKind::kInvalidInput);
}

TEST(ResidualBasis, StorageRoundsToFloatAndInverts) {
  std::mt19937_64 gen(4);
  const ResidualBasis b = to_storage(random_basis(12, gen));
  EXPECT_TRUE(b.stored);
  for (double v : b.vectors.data) EXPECT_EQ(v, static_cast<double>(static_cast<float>(v)));
  const Matrix p = multiply(b.analysis, b.vectors);
  for (std::size_t i = 0; i < 12; ++i) {
    for (std::size_t j = 0; j < 12; ++j) EXPECT_NEAR(p(i, j), i == j ? 1.0 : 0.0, 1e-12);
  }
}

TEST(ErrorBound, FromNrmse) {
  const std::vector<SpeciesRange> ranges{{0, 2}, {5, 5}};
  const ErrorBoundSpec s = ErrorBoundSpec::from_nrmse(1e-3, ranges, 80);
  EXPECT_DOUBLE_EQ(s.tau[0], 1e-3 * 2 * std::sqrt(80.0));
  EXPECT_DOUBLE_EQ(s.tau[1], 1e-3 * std::sqrt(80.0));
  EXPECT_KIND(ErrorBoundSpec::from_nrmse(0.0, ranges, 80), ErrorKind::kInvalidSpec);
  EXPECT_KIND(ErrorBoundSpec::absolute(-1.0, 2), ErrorKind::kInvalidSpec);
  EXPECT_DOUBLE_EQ(default_coefficient_bin(4.0, 16), 0.5);
}

TEST(CorrectBlock, WithinBoundNeedsNothing) {
  std::mt19937_64 gen(5);
  const std::size_t d = 80;
  const ResidualBasis b = random_basis(d, gen);
  const double tau = 1.0;
  auto x = test::random_vector(d, gen);
  auto r = test::random_vector(d, gen);
  const double rn = norm(r, std::vector<double>(d, 0.0));
  std::vector<double> xr(d);
  for (std::size_t j = 0; j < d; ++j) xr[j] = x[j] - r[j] * (tau / 2) / rn;
  const BlockCorrection c = correct_block(x, xr, b, tau, default_coefficient_bin(tau, d));
  EXPECT_TRUE(c.record.empty());
  EXPECT_EQ(c.corrected, xr);
}

TEST(CorrectBlock, SingleDirectionNeedsOneCoefficient) {
  std::mt19937_64 gen(6);
  const std::size_t d = 80;
  const ResidualBasis b = random_basis(d, gen);
  const double tau = 0.1;
  const auto x = test::random_vector(d, gen);
  std::vector<double> xr(d);
  for (std::size_t j = 0; j < d; ++j) xr[j] = x[j] - 2 * tau * b.vectors(j, 0);
  const BlockCorrection c = correct_block(x, xr, b, tau, default_coefficient_bin(tau, d));
  EXPECT_EQ(c.record.indices, (std::vector<std::uint32_t>{0}));
  EXPECT_LE(c.error, tau);
}

TEST(CorrectBlock, CoarseBinRejected) {
  std::mt19937_64 gen(6);
  const ResidualBasis b = random_basis(16, gen);
  const std::vector<double> x(16, 1.0), xr(16, 0.0);
  EXPECT_KIND(correct_block(x, xr, b, 1.0, 1.0 / 4 + 1e-9), ErrorKind::kConfiguration);
  EXPECT_NO_THROW(correct_block(x, xr, b, 1.0, 1.0 / 4));
  EXPECT_KIND(correct_block(x, std::vector<double>(15), b, 1.0, 0.1), ErrorKind::kShape);
}

TEST(CorrectBlock, MatchesBruteForceOracle) {
  std::mt19937_64 gen(7);
  const std::size_t d = 80;
  for (int basis_trial = 0; basis_trial < 4; ++basis_trial) {
    ResidualBasis b = random_basis(d, gen);
    if (basis_trial % 2 == 1) b = to_storage(b);
    for (int trial = 0; trial < 60; ++trial) {
      const auto x = test::random_vector(d, gen);
      auto xr = test::random_vector(d, gen, -0.2, 0.2);
      for (std::size_t j = 0; j < d; ++j) xr[j] += x[j];
      const double tau = std::uniform_real_distribution<double>(0.01, 1.5)(gen);
      const double bin = default_coefficient_bin(tau, d);
      const bool round = trial % 3 == 0;
      const BlockCorrection c = correct_block(x, xr, b, tau, bin, {Schedule::kStepwise, round});
      EXPECT_EQ(c.record.indices.size(), oracle::minimal_m(x, xr, b, tau, bin, round));
      EXPECT_LE(c.error, tau);
      EXPECT_TRUE(std::is_sorted(c.record.indices.begin(), c.record.indices.end()));
    }
  }
}

TEST(CorrectBlock, FastScheduleAlsoBounds) {
  std::mt19937_64 gen(17);
  const std::size_t d = 80;
  const ResidualBasis b = to_storage(random_basis(d, gen));
  for (int trial = 0; trial < 100; ++trial) {
    const auto x = test::random_vector(d, gen);
    const auto xr = test::random_vector(d, gen);
    const double tau = std::uniform_real_distribution<double>(0.01, 2.0)(gen);
    const double bin = default_coefficient_bin(tau, d);
    const BlockCorrection fast = correct_block(x, xr, b, tau, bin, {Schedule::kFast, true});
    const BlockCorrection stepwise = correct_block(x, xr, b, tau, bin, {Schedule::kStepwise, true});
    EXPECT_LE(fast.error, tau);
    EXPECT_GE(fast.record.indices.size(), stepwise.record.indices.size());
    EXPECT_EQ(apply_correction(xr, b, fast.record, bin), fast.corrected);
  }
}

TEST(GreedyOrder, SquaredMagnitudeDescendingTiesLow) {
  const std::vector<double> c{0.5, -2.0, 2.0, 0.1, -0.5};
  EXPECT_EQ(greedy_order(c), (std::vector<std::uint32_t>{1, 2, 0, 4, 3}));
}

TEST(ApplyCorrection, EmptyRecordAndBitExactReplay) {
  std::mt19937_64 gen(9);
  const std::size_t d = 80;
  const ResidualBasis b = to_storage(random_basis(d, gen));
  const auto x = test::random_vector(d, gen);
  const auto xr = test::random_vector(d, gen);
  EXPECT_EQ(apply_correction(xr, b, {}, 0.1), xr);
  const double tau = 0.3;
  const BlockCorrection c = correct_block(x, xr, b, tau, default_coefficient_bin(tau, d));
  // a decoder only sees the stored float32 columns
  const ResidualBasis reloaded = stored_basis(b.vectors, 0);
  EXPECT_EQ(apply_correction(xr, reloaded, c.record, default_coefficient_bin(tau, d)), c.corrected);
}

TEST(ApplyCorrection, FullRecordQuantizationBound) {
  std::mt19937_64 gen(10);
  const std::size_t d = 80;
  const ResidualBasis b = random_basis(d, gen);
  for (int trial = 0; trial < 200; ++trial) {
    const auto x = test::random_vector(d, gen);
    const auto xr = test::random_vector(d, gen);
    const double bin = std::uniform_real_distribution<double>(1e-4, 0.2)(gen);
    std::vector<double> r(d);
    for (std::size_t j = 0; j < d; ++j) r[j] = x[j] - xr[j];
    const auto c = project(b, r);
    CorrectionRecord rec;
    for (std::uint32_t k = 0; k < d; ++k) {
      rec.indices.push_back(k);
      rec.coefficients.push_back(std::llrint(c[k] / bin));
    }
    const auto xg = apply_correction(xr, b, rec, bin);
    EXPECT_LE(norm(x, xg), bin / 2 * std::sqrt(static_cast<double>(d)) * (1 + 1e-9));
  }
}

TEST(ApplyCorrection, CorruptRecords) {
  const ResidualBasis b = fit_residual_basis(std::vector<double>(16, 1.0), 4);
  const std::vector<double> xr(4, 0.0);
  EXPECT_KIND(apply_correction(xr, b, {0, 0, {4}, {1}}, 0.1), ErrorKind::kCorruption);
  EXPECT_KIND(apply_correction(xr, b, {0, 0, {1}, {}}, 0.1), ErrorKind::kCorruption);
}
