#include "symmetria/gradcheck.hpp"

#include <cmath>

namespace symmetria {

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& fn,
                        const Tensor& point, double step) {
    Tensor g(point.shape());
    Tensor x = point;
    for (int64_t i = 0; i < point.size(); ++i) {
        const double orig = x.flat(i);
        x.flat(i) = orig + step;
        const double up = fn(x);
        x.flat(i) = orig - step;
        const double dn = fn(x);
        x.flat(i) = orig;
        if (!std::isfinite(up) || !std::isfinite(dn))
            throw TensorError("finite_diff_grad: non-finite function value");
        g.flat(i) = (up - dn) / (2.0 * step);
    }
    return g;
}

double rel_err(double analytic, double numeric) {
    const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
    return std::fabs(analytic - numeric) / denom;
}

double max_rel_err(const Tensor& analytic, const Tensor& numeric) {
    double m = 0;
    for (int64_t i = 0; i < analytic.size(); ++i)
        m = std::max(m, rel_err(analytic.flat(i), numeric.flat(i)));
    return m;
}

}  // namespace symmetria
