#include "spikecomp/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace spikecomp {

double finite_diff_check(const ScalarFn& f, const Tensor& x, double eps) {
  Tensor probe = x.clone();
  probe.set_requires_grad(true);
  backward(f(probe));
  const std::vector<double> analytic = probe.grad();

  NoGradGuard no_grad;
  Tensor work = x.clone();
  double worst = 0.0;
  for (std::size_t i = 0; i < work.numel(); ++i) {
    const double saved = work.data()[i];
    work.data()[i] = saved + eps;
    const double up = f(work).item();
    work.data()[i] = saved - eps;
    const double down = f(work).item();
    work.data()[i] = saved;
    const double numeric = (up - down) / (2.0 * eps);
    worst = std::max(worst, std::abs(analytic[i] - numeric) / (std::abs(analytic[i]) + 1e-12));
  }
  return worst;
}

}  // namespace spikecomp
