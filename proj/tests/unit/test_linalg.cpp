#include <Eigen/Dense>

#include "gbatc/linalg.hpp"
#include "helpers.hpp"

using namespace gbatc;

TEST(Linalg, JacobiMatchesEigenSolver) {
  std::mt19937_64 gen(8);
  for (int n : {1, 2, 5, 17, 80}) {
    Matrix a(static_cast<std::size_t>(n), static_cast<std::size_t>(n));
    Eigen::MatrixXd e(n, n);
    const auto r = test::random_vector(static_cast<std::size_t>(n * n), gen);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j <= i; ++j) {
        const double v = r[static_cast<std::size_t>(i * n + j)];
        a(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = a(static_cast<std::size_t>(j), static_cast<std::size_t>(i)) = v;
        e(i, j) = e(j, i) = v;
      }
    }
    const SymmetricEigen mine = symmetric_eigen(a);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ref(e);
    for (int k = 0; k < n; ++k) {
      // Eigen sorts ascending
      EXPECT_NEAR(mine.values[static_cast<std::size_t>(k)], ref.eigenvalues()(n - 1 - k), 1e-10);
    }
    for (std::size_t k = 1; k < mine.values.size(); ++k) EXPECT_GE(mine.values[k - 1], mine.values[k]);
    // A v = lambda v and orthonormality
    for (std::size_t k = 0; k < static_cast<std::size_t>(n); ++k) {
      for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
        double av = 0;
        for (std::size_t j = 0; j < static_cast<std::size_t>(n); ++j) av += a(i, j) * mine.vectors(j, k);
        EXPECT_NEAR(av, mine.values[k] * mine.vectors(i, k), 1e-10);
      }
      for (std::size_t l = 0; l < static_cast<std::size_t>(n); ++l) {
        double dot = 0;
        for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) dot += mine.vectors(i, k) * mine.vectors(i, l);
        EXPECT_NEAR(dot, k == l ? 1.0 : 0.0, 1e-12);
      }
    }
  }
}

TEST(Linalg, InverseAndSingular) {
  Matrix a(2, 2);
  a(0, 0) = 4;
  a(0, 1) = 7;
  a(1, 0) = 2;
  a(1, 1) = 6;
  Matrix inv;
  ASSERT_TRUE(invert(a, inv));
  EXPECT_NEAR(inv(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(inv(0, 1), -0.7, 1e-15);
  EXPECT_NEAR(inv(1, 0), -0.2, 1e-15);
  EXPECT_NEAR(inv(1, 1), 0.4, 1e-15);
  Matrix s(2, 2, 1.0);
  EXPECT_FALSE(invert(s, inv));
}
