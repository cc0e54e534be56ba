#pragma once

#include <functional>

#include "spikecomp/tensor.hpp"

namespace spikecomp {

using ScalarFn = std::function<Tensor(const Tensor&)>;

/// Compares the reverse-mode gradient of f at x against central differences.
/// Returns max_i |analytic_i - numeric_i| / (|analytic_i| + 1e-12).
/// f must be smooth around x; x itself is left untouched.
double finite_diff_check(const ScalarFn& f, const Tensor& x, double eps = 1e-5);

}  // namespace spikecomp
