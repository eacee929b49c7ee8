#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace klap;
using klap::testing::h2_quadrature;
using klap::testing::random_matrix;
using klap::testing::random_system;
using klap::testing::rel_err;

namespace {

StateSpaceSystem scalar(double a, double b, double c, double d) {
  return {Matrix::Constant(1, 1, a), Matrix::Constant(1, 1, b), Matrix::Constant(1, 1, c),
          Matrix::Constant(1, 1, d)};
}

}  // namespace

TEST(StateSpaceSystem, ValidatesShapes) {
  const Matrix A = -Matrix::Identity(2, 2);
  auto expect_code = [](auto&& make, ErrorCode code) {
    try {
      make();
      FAIL() << "expected " << to_string(code);
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), code);
    }
  };
  expect_code([&] { StateSpaceSystem(A, Matrix::Ones(3, 1), Matrix::Ones(1, 2), Matrix::Zero(1, 1)); },
              ErrorCode::DimensionMismatch);
  expect_code([&] { StateSpaceSystem(A, Matrix::Ones(2, 1), Matrix::Ones(2, 2), Matrix::Zero(1, 1)); },
              ErrorCode::DimensionMismatch);
  expect_code([&] { StateSpaceSystem(A, Matrix::Ones(2, 1), Matrix::Ones(1, 2), Matrix::Zero(2, 2)); },
              ErrorCode::DimensionMismatch);
  expect_code([&] { StateSpaceSystem(-Matrix::Identity(1, 1), Matrix::Ones(1, 2), Matrix::Ones(2, 1),
                                     Matrix::Zero(2, 2)); },
              ErrorCode::DimensionMismatch);
  expect_code([&] { StateSpaceSystem(Matrix::Identity(2, 2), Matrix::Ones(2, 1), Matrix::Ones(1, 2),
                                     Matrix::Zero(1, 1)); },
              ErrorCode::NotHurwitz);
}

TEST(TransferEval, Examples) {
  EXPECT_NEAR(std::abs(transfer_eval(scalar(-1, 1, 1, 0), 0.0)(0, 0) - 1.0), 0.0, 1e-15);

  // A^{-1} = (1/9) [[-1, -4], [2, -1]], so -C A^{-1} B = (1 + 8) / 9 = 1.
  const auto toy = bench::toy_system(0.0);
  const Complex g0 = transfer_eval(toy, 0.0)(0, 0);
  EXPECT_NEAR(g0.real(), 1.0, 1e-14);
  EXPECT_NEAR(g0.imag(), 0.0, 1e-15);

  const auto toy_d = bench::toy_system(0.3);
  EXPECT_NEAR(std::abs(transfer_eval(toy_d, 1e12)(0, 0) - 0.3), 0.0, 1e-10);
}

TEST(TransferEval, SingularShift) {
  try {
    transfer_eval(scalar(-1, 1, 1, 0), -1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SingularShift);
  }
}

TEST(PopovEval, Examples) {
  std::mt19937_64 rng(1);
  const Matrix A = klap::testing::random_hurwitz(rng, 4);
  const StateSpaceSystem flat(A, random_matrix(rng, 4, 2), Matrix::Zero(2, 4),
                              0.5 * Matrix::Identity(2, 2));
  for (double w : {0.0, 0.3, 7.0})
    EXPECT_LT((popov_eval(flat, w) - CMatrix::Identity(2, 2)).norm(), 1e-15);

  EXPECT_NEAR(popov_eval(bench::toy_system(0.125), 0.0)(0, 0).real(), 2.25, 1e-14);

  for (int k = 0; k < 5; ++k) {
    const auto sys = random_system(rng, 5, 3, k % 2 == 0);
    const CMatrix Phi = popov_eval(sys, 0.7 * (k + 1));
    EXPECT_EQ((Phi - Phi.adjoint()).norm(), 0.0);
  }
}

TEST(PopovScan, InvariantsAndExamples) {
  const auto toy = bench::toy_system(0.0);
  const auto grid = default_popov_grid(toy);
  ASSERT_EQ(grid.size(), 501u);
  EXPECT_EQ(grid.front(), 0.0);
  const PopovScan scan = popov_scan(toy, grid);
  EXPECT_LT(scan.global_min, 0.0);
  EXPECT_EQ(scan.global_min, *std::min_element(scan.min_eigenvalues.begin(), scan.min_eigenvalues.end()));

  const PopovScan threaded = popov_scan(toy, grid, 4);
  EXPECT_EQ(threaded.min_eigenvalues, scan.min_eigenvalues);
  EXPECT_EQ(threaded.argmin_frequency, scan.argmin_frequency);

  EXPECT_THROW(popov_scan(toy, {1.0, 0.5}), Error);
  EXPECT_THROW(popov_scan(toy, {}), Error);
}

TEST(Gramian, ScalarAndToy) {
  EXPECT_NEAR(controllability_gramian(scalar(-2.0, 3.0, 1.0, 0.0))(0, 0), 9.0 / 4.0, 1e-15);
  const auto toy = bench::toy_system();
  const Matrix oracle = kron_lyapunov_oracle(toy.A(), toy.B() * toy.B().transpose());
  for (auto s : {LyapunovStrategy::Diagonalized, LyapunovStrategy::Dense})
    EXPECT_LT(rel_err(controllability_gramian(toy, s), oracle), 1e-12);
}

TEST(Gramian, AccResidualAndPsd) {
  const auto acc = bench::acc_system(0.125);
  const Matrix P = controllability_gramian(acc);
  const Matrix BBt = acc.B() * acc.B().transpose();
  EXPECT_LE((acc.A() * P + P * acc.A().transpose() + BBt).norm(),
            1e-10 * (acc.A().norm() * P.norm() + BBt.norm()));
  EXPECT_GE(min_eigenvalue(P), -tol::psd * P.norm());
}

TEST(Gramian, TransformationLaw) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    const auto sys = random_system(rng, 6, 2, false);
    Matrix T = random_matrix(rng, 6, 6);
    T.diagonal().array() += 4.0;
    const StateSpaceSystem moved(T * sys.A() * T.inverse(), T * sys.B(), sys.C() * T.inverse(),
                                 sys.D());
    const Matrix P = controllability_gramian(sys);
    EXPECT_LT(rel_err(controllability_gramian(moved), T * P * T.transpose()), 1e-9);
  }
}

TEST(H2Error, Examples) {
  const auto toy = bench::toy_system();
  EXPECT_EQ(h2_error_sq(toy, toy.C()), 0.0);
  Matrix C_hat(1, 2);
  C_hat << 0.4615384615, 0.8076923077;
  EXPECT_NEAR(h2_error_sq(toy, C_hat), 0.94, 0.01);
  EXPECT_THROW(h2_error_sq(toy, Matrix::Zero(2, 2)), Error);
}

TEST(H2Error, MatchesWeightedInnerProduct) {
  std::mt19937_64 rng(23);
  const auto sys = random_system(rng, 5, 2, true);
  const Matrix C_hat = random_matrix(rng, 2, 5);
  const Matrix P = controllability_gramian(sys);
  const Matrix E = sys.C() - C_hat;
  double explicit_sum = 0.0;
  for (Eigen::Index i = 0; i < E.rows(); ++i)
    explicit_sum += E.row(i) * P * E.row(i).transpose();
  EXPECT_NEAR(h2_error_sq(sys, C_hat), explicit_sum, 1e-12 * explicit_sum);
}

TEST(H2Error, MatchesFrequencyQuadrature) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const auto sys = random_system(rng, 2 + trial % 5, 1 + trial % 2, trial % 2 == 0);
    const Matrix C_hat = random_matrix(rng, sys.m(), sys.n());
    const double exact = h2_error_sq(sys, C_hat);
    EXPECT_NEAR(h2_quadrature(sys, C_hat), exact, 1e-3 * exact) << "trial " << trial;
  }
}

TEST(Diagonalize, PreservesTransferFunction) {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> U(-3.0, 3.0);
  // ACC has a Jordan block at -0.25 and cannot be diagonalized.
  EXPECT_THROW(diagonalize(bench::acc_system(0.125)), Error);
  for (const auto& sys : {bench::toy_system(0.125), random_system(rng, 7, 3, true),
                          random_system(rng, 5, 2, false)}) {
    const DiagonalizedSystem d = diagonalize(sys);
    const CMatrix back = d.transform.right_eigenvectors * d.A() * d.transform.inverse_eigenvectors;
    EXPECT_LE((back - sys.A().cast<Complex>()).norm(), 1e-10 * sys.A().norm());
    for (int k = 0; k < 10; ++k) {
      const Complex s(U(rng), U(rng));
      const CMatrix G = transfer_eval(sys, s);
      EXPECT_LE((transfer_eval(d, s) - G).norm(), 1e-8 * std::max(1.0, G.norm()));
    }
  }
  const DiagonalizedSystem toy = diagonalize(bench::toy_system());
  for (Eigen::Index k = 0; k < 2; ++k)
    EXPECT_NEAR(std::abs(toy.poles(k) - Complex(-1.0, std::copysign(2.0 * std::sqrt(2.0),
                                                                     toy.poles(k).imag()))),
                0.0, 1e-14);
}

TEST(Diagonalize, AlreadyDiagonal) {
  Matrix A = Matrix::Zero(3, 3);
  A.diagonal() << -1, -2, -3;
  const StateSpaceSystem sys(A, Matrix::Ones(3, 1), Matrix::Ones(1, 3), Matrix::Zero(1, 1));
  const DiagonalizedSystem d = diagonalize(sys);
  const CMatrix& V = d.transform.right_eigenvectors;
  for (Eigen::Index j = 0; j < 3; ++j) EXPECT_NEAR(V.col(j).cwiseAbs().maxCoeff(), V.col(j).norm(), 1e-14);
}

TEST(Diagonalize, SimilarityInvariance) {
  std::mt19937_64 rng(43);
  const auto sys = random_system(rng, 5, 2, true);
  Matrix T = random_matrix(rng, 5, 5);
  T.diagonal().array() += 3.0;
  const StateSpaceSystem moved(T * sys.A() * T.inverse(), T * sys.B(), sys.C() * T.inverse(),
                               sys.D());
  for (double w : {0.0, 0.1, 1.0, 10.0, 100.0}) {
    const CMatrix G = transfer_eval(sys, Complex(0.0, w));
    EXPECT_LE((transfer_eval(moved, Complex(0.0, w)) - G).norm(), 1e-8 * std::max(1.0, G.norm()));
  }
}
