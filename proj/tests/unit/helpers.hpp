#pragma once

#include <gtest/gtest.h>

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "gbatc/error.hpp"
#include "gbatc/field.hpp"

namespace gbatc::test {

inline ::testing::AssertionResult throws_kind(const std::function<void()>& fn, ErrorKind kind) {
  try {
    fn();
  } catch (const Error& e) {
    if (e.kind() == kind) return ::testing::AssertionSuccess();
    return ::testing::AssertionFailure() << "wrong kind: " << e.what();
  } catch (const std::exception& e) {
    return ::testing::AssertionFailure() << "non-library exception: " << e.what();
  }
  return ::testing::AssertionFailure() << "nothing thrown";
}

#define EXPECT_KIND(stmt, kind) EXPECT_TRUE(::gbatc::test::throws_kind([&] { stmt; }, kind))

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& gen, double lo = -1.0,
                                         double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = dist(gen);
  return v;
}

inline FieldDataset small_field(FieldDims dims, std::uint64_t seed = 7) {
  SynthSpec spec;
  spec.dims = dims;
  spec.kernels = 4;
  return synthesize(spec, seed);
}

}  // namespace gbatc::test
