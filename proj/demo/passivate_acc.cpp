// Passivates the ACC benchmark and prints the Popov margin before and after.
#include <cstdio>

#include "klap/klap.hpp"

int main() {
  const klap::StateSpaceSystem sys = klap::bench::acc_system(0.125);
  const klap::PassivityVerdict before = klap::check_passive(sys);
  std::printf("input:  passive=%d margin=%.4g at omega=%.4g\n", before.passive, before.margin,
              before.argmin_frequency);

  const klap::KlapResult r = klap::klap(sys);
  const klap::PassivityVerdict after = klap::check_passive(sys.with_output(r.C_hat));
  std::printf("output: passive=%d margin=%.4g\n", after.passive, after.margin);
  std::printf("H2 error %.6f (initial %.6f), %d iterations, %d restarts\n", r.h2_error,
              std::sqrt(r.J_initial), r.iterations, r.restarts);
  std::printf("C_hat =");
  for (Eigen::Index j = 0; j < r.C_hat.cols(); ++j) std::printf(" %.6f", r.C_hat(0, j));
  std::printf("\n");
  return after.passive ? 0 : 1;
}
