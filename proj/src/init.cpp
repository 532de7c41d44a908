#include "textheads/init.hpp"

#include <cmath>

#include "textheads/error.hpp"

namespace textheads {

Tensor init_uniform(const Shape& shape, Rng& rng) {
    double fan_in = 0.0;
    double fan_out = 0.0;
    if (shape.size() == 2) {
        fan_in = static_cast<double>(shape[1]);
        fan_out = static_cast<double>(shape[0]);
    } else if (shape.size() == 3) {
        fan_in = static_cast<double>(shape[1] * shape[2]);
        fan_out = static_cast<double>(shape[0] * shape[1]);
    } else {
        throw ShapeError("init_uniform: expected rank 2 or 3, got " + shape_string(shape));
    }
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) {
        v = rng.uniform(-bound, bound);
    }
    Tensor t(shape, std::move(values));
    t.set_requires_grad(true);
    return t;
}

Tensor init_constant(const Shape& shape, double value) {
    Tensor t(shape, value);
    t.set_requires_grad(true);
    return t;
}

}  // namespace textheads
