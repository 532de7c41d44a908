#pragma once

#include "textheads/rng.hpp"
#include "textheads/tensor.hpp"

namespace textheads {

/// Trainable leaf drawn uniformly from ±sqrt(6 / (fan_in + fan_out)).
/// Rank 2 [out,in]: fans are (in, out). Rank 3 [K,w,Din]: (w·Din, K·w).
Tensor init_uniform(const Shape& shape, Rng& rng);

/// Trainable leaf filled with `value`.
Tensor init_constant(const Shape& shape, double value = 0.0);

}  // namespace textheads
