#include <cmath>
#include <algorithm>
#include <numeric>
#include <sstream>

#include "gbatc/metrics.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace gbatc;

TEST(Nrmse, IdenticalIsZero) {
  std::mt19937_64 gen(1);
  const auto a = test::random_vector(500, gen);
  EXPECT_EQ(nrmse(a, a, 2.0), 0.0);
}

TEST(Nrmse, UnitRangeOffset) {
  std::vector<double> x(1001), y(1001);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = static_cast<double>(i) / 1000.0;
    y[i] = x[i] + 0.1;
  }
  const FieldDataset a({1, 1, 1, 1001}, x), b({1, 1, 1, 1001}, y);
  EXPECT_EQ(a.range(0).span(), 1.0);
  // (x + 0.1) - x rounds by at most an ulp of x per entry
  EXPECT_NEAR(nrmse(a, b, 0), 0.1, 4 * std::numeric_limits<double>::epsilon());
}

TEST(Nrmse, MatchesDirectFormula) {
  std::mt19937_64 gen(2);
  for (int trial = 0; trial < 50; ++trial) {
    const FieldDims dims{3, 2, 5, 7};
    const FieldDataset a(dims, test::random_vector(dims.size(), gen, -3, 8));
    auto noisy = test::random_vector(dims.size(), gen, -0.01, 0.01);
    for (std::size_t i = 0; i < noisy.size(); ++i) noisy[i] += a.values()[i];
    const FieldDataset b(dims, noisy);
    double mean = 0;
    for (int s = 0; s < 3; ++s) {
      const auto xa = a.species(s), xb = b.species(s);
      double lo = xa[0], hi = xa[0], sq = 0;
      for (std::size_t i = 0; i < xa.size(); ++i) {
        lo = std::min(lo, xa[i]);
        hi = std::max(hi, xa[i]);
        sq += (xa[i] - xb[i]) * (xa[i] - xb[i]);
      }
      const double ref = std::sqrt(sq / static_cast<double>(xa.size())) / (hi - lo);
      EXPECT_NEAR(nrmse(a, b, s), ref, 1e-10 * ref);
      mean += ref;
    }
    EXPECT_NEAR(mean_nrmse(a, b), mean / 3, 1e-10 * mean);
  }
}

TEST(Nrmse, ZeroRange) {
  const std::vector<double> a(10, 3.0), b(10, 3.5);
  EXPECT_EQ(nrmse(a, a, 0.0), 0.0);
  EXPECT_TRUE(std::isnan(nrmse(a, b, 0.0)));
  EXPECT_KIND(nrmse(a, std::vector<double>(9), 1.0), ErrorKind::kShape);
}

TEST(Psnr, ClosedFormAndIdentical) {
  const std::vector<double> a(64, 0.25);
  std::vector<double> b(64, 0.35);
  EXPECT_NEAR(psnr(a, b, 1.0), 20.0, 1e-12);
  EXPECT_TRUE(std::isinf(psnr(a, a, 1.0)));
  std::mt19937_64 gen(3);
  const auto x = test::random_vector(300, gen), y = test::random_vector(300, gen);
  const double ref = 20 * std::log10(2.5 / oracle::rmse(x, y));
  EXPECT_NEAR(psnr(x, y, 2.5), ref, 1e-10 * std::abs(ref));
}

TEST(Ssim, IdenticalIsExactlyOne) {
  std::mt19937_64 gen(4);
  const auto a = test::random_vector(40 * 33, gen);
  EXPECT_EQ(ssim(a, a, 40, 33, 2.0), 1.0);
}

TEST(Ssim, NegatedZeroMeanIsNonPositive) {
  // one 11x11 window whose Gaussian-weighted mean is zero
  std::mt19937_64 gen(5);
  auto a = test::random_vector(121, gen);
  const auto taps = gaussian_taps(11, 1.5);
  double m = 0;
  for (int i = 0; i < 11; ++i) {
    for (int j = 0; j < 11; ++j) m += taps[static_cast<std::size_t>(i)] * taps[static_cast<std::size_t>(j)] * a[static_cast<std::size_t>(i * 11 + j)];
  }
  for (double& v : a) v -= m;
  std::vector<double> b(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) b[i] = -a[i];
  EXPECT_LT(ssim(a, b, 11, 11, 2.0), 0.0);
  EXPECT_NEAR(ssim(a, b, 11, 11, 2.0), oracle::ssim(a, b, 11, 11, 2.0), 1e-10);
}

TEST(Ssim, MatchesDirectFormula) {
  std::mt19937_64 gen(6);
  for (int trial = 0; trial < 10; ++trial) {
    const int h = 11 + static_cast<int>(gen() % 20), w = 11 + static_cast<int>(gen() % 20);
    const auto a = test::random_vector(static_cast<std::size_t>(h * w), gen);
    auto b = test::random_vector(static_cast<std::size_t>(h * w), gen, -0.3, 0.3);
    for (std::size_t i = 0; i < b.size(); ++i) b[i] += a[i];
    const double ref = oracle::ssim(a, b, h, w, 2.0);
    EXPECT_NEAR(ssim(a, b, h, w, 2.0), ref, 1e-10 * std::abs(ref));
  }
}

TEST(Ssim, SmallFrameRejected) {
  const std::vector<double> a(100, 1.0);
  EXPECT_KIND(ssim(a, a, 10, 10, 1.0), ErrorKind::kInvalidInput);
}

TEST(Qoi, ConstantRateAndLinearInA) {
  QoiSpec spec{"t", 0, 1.0, 1.0, {{3.5, 0.0, 0.0, {}}}};
  const std::vector<double> p{0.7, -2.0};
  EXPECT_EQ(qoi_rates(p, spec)[0], 3.5);
  spec.outputs[0] = {1.0, 1.5, 2.0, {0.5, 2.0}};
  const std::vector<double> q{0.3, 0.8};
  const double r1 = qoi_rates(q, spec)[0];
  spec.outputs[0].a = 2.0;
  EXPECT_DOUBLE_EQ(qoi_rates(q, spec)[0], 2 * r1);
  const double u = 1.3;
  EXPECT_NEAR(r1, std::pow(u, 1.5) * std::exp(-2.0 / u) * std::sqrt(0.3) * 0.64, 1e-15);
}

TEST(Qoi, ClampsNegativeFractionalBase) {
  QoiSpec spec{"t", 0, 1.0, 0.0, {{1.0, 0.0, 0.0, {0.0, 0.5}}}};
  std::uint64_t clamped = 0;
  const std::vector<double> p{0.0, -0.01};
  EXPECT_EQ(qoi_rates(p, spec, &clamped)[0], 0.0);
  EXPECT_EQ(clamped, 1u);
  spec.offset = -1.0;
  EXPECT_EQ(qoi_rates(std::vector<double>{0.0, 1.0}, spec, &clamped)[0], 0.0);
  EXPECT_EQ(clamped, 2u);
}

TEST(Qoi, PointwiseUnderPermutation) {
  SynthSpec s;
  s.dims = {3, 2, 6, 6};
  const FieldDataset d = synthesize(s, 2);
  const QoiSpec spec = qoi_minor_like(d);
  const FieldDataset rates = qoi_field(d, spec);
  std::mt19937_64 gen(8);
  const std::size_t n = d.dims().species_size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), gen);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t p = perm[k];
    std::vector<double> point{d.values()[p], d.values()[n + p], d.values()[2 * n + p]};
    const auto r = qoi_rates(point, spec);
    for (int o = 0; o < 3; ++o) EXPECT_EQ(r[static_cast<std::size_t>(o)], rates.values()[static_cast<std::size_t>(o) * n + p]);
  }
}

TEST(Qoi, HighActivationAmplifiesPerturbation) {
  SynthSpec s;
  s.dims = {4, 6, 32, 32};
  const FieldDataset d = synthesize(s, 3);
  std::mt19937_64 gen(9);
  std::vector<double> noisy(d.values().begin(), d.values().end());
  for (int sp = 0; sp < 4; ++sp) {
    const double span = d.range(sp).span();
    for (std::size_t i = 0; i < d.dims().species_size(); ++i) {
      noisy[sp * d.dims().species_size() + i] += std::uniform_real_distribution<double>(-1e-3, 1e-3)(gen) * span;
    }
  }
  const FieldDataset r(d.dims(), noisy);
  const QoiSpec minor = qoi_minor_like(d), major = qoi_major_like(d);
  const FidelityReport fm = fidelity_report(d, r, &minor);
  const FidelityReport fj = fidelity_report(d, r, &major);
  EXPECT_GT(*fm.qoi_mean_nrmse, fm.mean_nrmse);
  EXPECT_GT(*fm.qoi_mean_nrmse, *fj.qoi_mean_nrmse);
}

TEST(Statistics, ConstantAndCheckerboard) {
  std::vector<double> v(2 * 4 * 4);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      v[static_cast<std::size_t>(i * 4 + j)] = 2.5;
      v[static_cast<std::size_t>(16 + i * 4 + j)] = (i + j) % 2;
    }
  }
  const FieldDataset d({1, 2, 4, 4}, v);
  const auto st = species_statistics(d);
  ASSERT_EQ(st.size(), 2u);
  EXPECT_EQ(st[0].mean, 2.5);
  EXPECT_EQ(st[0].stddev, 0.0);
  EXPECT_EQ(st[1].mean, 0.5);
  EXPECT_EQ(st[1].stddev, 0.5);
}

TEST(Statistics, MatchesTwoPassReference) {
  std::mt19937_64 gen(10);
  const FieldDims dims{2, 3, 9, 9};
  const FieldDataset d(dims, test::random_vector(dims.size(), gen, 0, 5));
  for (const auto& s : species_statistics(d)) {
    const auto f = d.frame(s.species, s.timestep);
    long double m = 0;
    for (double x : f) m += x;
    m /= f.size();
    long double var = 0;
    for (double x : f) var += (x - m) * (x - m);
    EXPECT_NEAR(s.mean, static_cast<double>(m), 1e-12);
    EXPECT_NEAR(s.stddev, std::sqrt(static_cast<double>(var / f.size())), 1e-12);
  }
}

TEST(Reports, CsvAndJsonLines) {
  SynthSpec s;
  s.dims = {2, 2, 12, 12};
  const FieldDataset d = synthesize(s, 4);
  const FidelityReport r = fidelity_report(d, d);
  std::ostringstream csv, jl;
  write_csv(csv, r);
  write_jsonl(jl, r);
  std::istringstream lines(csv.str());
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "species,metric,value,timestep");
  std::getline(lines, line);
  EXPECT_EQ(line, "species_0,nrmse,0,");
  EXPECT_NE(jl.str().find("\"value\":\"inf\""), std::string::npos);
  EXPECT_NE(csv.str().find("all,mean_nrmse,0,"), std::string::npos);
}
