#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "textheads/tensor.hpp"

namespace textheads {

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t param_index = 0;  // location of the worst coordinate
    std::size_t coordinate = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

/// Compares the reverse-mode gradient of `loss_fn` with respect to every
/// coordinate of `params` against central differences with step `eps`.
/// The per-coordinate error is |a - n| / max(1e-8, |a| + |n|).
///
/// `loss_fn` must be deterministic and return a scalar; it is called once with
/// graph recording for the analytic pass and twice per coordinate without it.
/// Throws NumericError naming the coordinate if a non-finite value shows up.
GradCheckResult grad_check(const std::function<Tensor()>& loss_fn, std::span<const Tensor> params,
                           double eps = 1e-5);

}  // namespace textheads
