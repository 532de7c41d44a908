#include "textheads/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "textheads/error.hpp"

namespace textheads {

namespace {

void require_finite(double value, std::size_t param, std::size_t coordinate, const char* what) {
    if (!std::isfinite(value)) {
        throw NumericError("grad_check: non-finite " + std::string(what) + " at parameter " + std::to_string(param) +
                           ", coordinate " + std::to_string(coordinate));
    }
}

}  // namespace

GradCheckResult grad_check(const std::function<Tensor()>& loss_fn, std::span<const Tensor> params, double eps) {
    for (Tensor p : params) {
        p.grad_accumulator();
        p.zero_grad();
    }
    Tensor loss = loss_fn();
    require_finite(loss.item(), 0, 0, "loss");
    loss.backward();

    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const Tensor& p : params) {
        analytic.emplace_back(p.grad().begin(), p.grad().end());
    }

    NoGradGuard no_grad;
    GradCheckResult worst;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor param = params[pi];
        std::span<double> values = param.mutable_data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double original = values[i];
            values[i] = original + eps;
            const double plus = loss_fn().item();
            values[i] = original - eps;
            const double minus = loss_fn().item();
            values[i] = original;
            require_finite(plus, pi, i, "loss");
            require_finite(minus, pi, i, "loss");
            const double a = analytic[pi][i];
            require_finite(a, pi, i, "analytic gradient");
            const double n = (plus - minus) / (2.0 * eps);
            const double err = std::abs(a - n) / std::max(1e-8, std::abs(a) + std::abs(n));
            if (err > worst.max_relative_error) {
                worst = {err, pi, i, a, n};
            }
        }
    }
    return worst;
}

}  // namespace textheads
