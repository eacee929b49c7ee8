#pragma once

#include <cmath>
#include <random>

#include "klap/klap.hpp"

namespace klap::testing {

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> N(0.0, 1.0);
  Matrix M(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) M(i, j) = N(rng);
  return M;
}

/// Random Hurwitz matrix with spectral abscissa in [-1.5, -0.1].
inline Matrix random_hurwitz(std::mt19937_64& rng, Eigen::Index n) {
  std::uniform_real_distribution<double> U(0.1, 1.5);
  Matrix G = random_matrix(rng, n, n) / std::sqrt(static_cast<double>(n));
  G.diagonal().array() -= max_real_part(G) + U(rng);
  return G;
}

/// Random stable system; D + D^T is positive definite when `definite_D`, zero otherwise.
inline StateSpaceSystem random_system(std::mt19937_64& rng, Eigen::Index n, Eigen::Index m,
                                      bool definite_D) {
  Matrix D = Matrix::Zero(m, m);
  if (definite_D) {
    const Matrix R = random_matrix(rng, m, m);
    const Matrix K = random_matrix(rng, m, m);
    D = 0.5 * R * R.transpose() / static_cast<double>(m) + 0.1 * Matrix::Identity(m, m) +
        0.1 * (K - K.transpose());
  }
  return {random_hurwitz(rng, n), random_matrix(rng, n, m), random_matrix(rng, m, n), D};
}

/// Frequency-domain H2 oracle: (1/pi) * integral over [0, inf) of
/// ||(C - C_hat) (i w I - A)^{-1} B||_F^2, trapezoidal in log w with
/// analytic end corrections.
inline double h2_quadrature(const StateSpaceSystem& sys, const Matrix& C_hat,
                            std::size_t points = 20000) {
  const Matrix E = sys.C() - C_hat;
  const double rho = std::max(1.0, spectral_radius(sys.A()));
  const double lo = 1e-6 * rho, hi = 1e6 * rho;
  auto f = [&](double w) {
    CMatrix shifted = -sys.A().cast<Complex>();
    shifted.diagonal().array() += Complex(0.0, w);
    const CMatrix H = E.cast<Complex>() * shifted.partialPivLu().solve(sys.B().cast<Complex>());
    return H.squaredNorm();
  };
  const double a = std::log(lo), b = std::log(hi);
  const double h = (b - a) / static_cast<double>(points - 1);
  double sum = 0.0;
  for (std::size_t k = 0; k < points; ++k) {
    const double t = a + h * static_cast<double>(k);
    const double w = std::exp(t);
    const double weight = (k == 0 || k + 1 == points) ? 0.5 : 1.0;
    sum += weight * f(w) * w;
  }
  sum *= h;
  sum += f(0.0) * lo;                           // [0, lo]
  sum += (E * sys.B()).squaredNorm() / hi;      // [hi, inf), ||E B||^2 / w^2 decay
  return sum / M_PI;
}

inline double rel_err(const Matrix& X, const Matrix& Y) {
  return (X - Y).norm() / std::max(1e-300, Y.norm());
}

}  // namespace klap::testing
