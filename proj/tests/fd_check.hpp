#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "muse/autograd.hpp"

namespace testutil {

// Central finite differences against reverse-mode gradients. `loss_fn` must
// rebuild the graph from the current parameter values on every call. Returns
// the worst relative error across all parameter entries.
//
// Entries whose perturbation window straddles a ReLU kink make the numeric
// estimate meaningless; those are detected by comparing central differences
// at two step sizes (they agree to O(eps^2) on smooth stretches) and skipped.
inline double fd_worst_rel_error(const std::vector<muse::nn::Var>& params,
                                 const std::function<muse::nn::Var()>& loss_fn, double eps = 1e-3) {
    for (const auto& p : params) const_cast<muse::nn::Var&>(p).zero_grad();
    muse::nn::Var loss = loss_fn();
    muse::nn::backward(loss);

    double worst = 0.0;
    for (const auto& p : params) {
        auto& v = const_cast<muse::nn::Var&>(p);
        for (Eigen::Index i = 0; i < v.rows(); ++i) {
            for (Eigen::Index j = 0; j < v.cols(); ++j) {
                const double orig = v.value()(i, j);
                auto central = [&](double h) {
                    v.value()(i, j) = orig + h;
                    const double up = loss_fn().value()(0, 0);
                    v.value()(i, j) = orig - h;
                    const double down = loss_fn().value()(0, 0);
                    v.value()(i, j) = orig;
                    return (up - down) / (2.0 * h);
                };
                const double coarse = central(eps);
                const double numeric = central(eps / 2.0);
                const double agree = std::max({std::abs(coarse), std::abs(numeric), 1e-6});
                if (std::abs(coarse - numeric) > 5e-3 * agree) continue;
                const double analytic = v.grad()(i, j);
                const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
                worst = std::max(worst, std::abs(numeric - analytic) / denom);
            }
        }
    }
    return worst;
}

}  // namespace testutil
