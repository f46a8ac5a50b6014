#pragma once
// Central finite differences, the gradient oracle every backward test runs
// against. Relative errors are thresholded: denom = max(|a|, |n|, 1e-8).
#include <functional>

#include "symmetria/tensor.hpp"

namespace symmetria {

// fn evaluated at perturbed copies of `point`; step is the half-width h.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& fn,
                        const Tensor& point, double step = 1e-5);

double rel_err(double analytic, double numeric);
// max over coordinates of rel_err
double max_rel_err(const Tensor& analytic, const Tensor& numeric);

}  // namespace symmetria
