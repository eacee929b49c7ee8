#pragma once

#include "klap/lti_system.hpp"

namespace klap::bench {

/// Two-state single-input example:
/// A = [[-1, 4], [-2, -1]], B = [1, 2]^T, C = [1, 0], D = d.
inline StateSpaceSystem toy_system(double d = 0.0) {
  Matrix A(2, 2), B(2, 1), C(1, 2), D(1, 1);
  A << -1, 4, -2, -1;
  B << 1, 2;
  C << 1, 0;
  D << d;
  return {A, B, C, D};
}

/// Four-state variant of the ACC benchmark with feedthrough d.
inline StateSpaceSystem acc_system(double d = 0.0) {
  Matrix A(4, 4), B(4, 1), C(1, 4), D(1, 1);
  A << -0.25, 1, 0, 0,
       0, -0.25, 1, 0,
       0, 0, -0.25, 1,
       0, 0, -2, -0.25;
  B << 0, 0, 0, 1;
  C << 1, 0, 0, 0;
  D << d;
  return {A, B, C, D};
}

}  // namespace klap::bench
