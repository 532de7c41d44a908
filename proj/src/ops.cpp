#include "textheads/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "textheads/error.hpp"

namespace textheads {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
    }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
    if (t.rank() != rank) {
        throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " +
                         shape_string(t.shape()));
    }
}

// g_in += factor * g_out, skipped when the input does not take gradients.
void accumulate(const Tensor& input, std::span<const double> g, double factor = 1.0) {
    if (!input.defined() || !input.requires_grad()) {
        return;
    }
    std::span<double> dst = input.grad_accumulator();
    for (std::size_t i = 0; i < g.size(); ++i) {
        dst[i] += factor * g[i];
    }
}

bool wants_grad(const Tensor& t) { return t.defined() && t.requires_grad(); }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.data().begin(), a.data().end());
    auto bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] += bd[i];
    }
    return Tensor::from_op(
        a.shape(), std::move(out), {a, b},
        [](std::span<const double>, std::span<const double> g, const std::vector<Tensor>& in) {
            accumulate(in[0], g);
            accumulate(in[1], g);
        },
        "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.data().begin(), a.data().end());
    auto bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] -= bd[i];
    }
    return Tensor::from_op(
        a.shape(), std::move(out), {a, b},
        [](std::span<const double>, std::span<const double> g, const std::vector<Tensor>& in) {
            accumulate(in[0], g);
            accumulate(in[1], g, -1.0);
        },
        "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.data().begin(), a.data().end());
    auto bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] *= bd[i];
    }
    return Tensor::from_op(
        a.shape(), std::move(out), {a, b},
        [](std::span<const double>, std::span<const double> g, const std::vector<Tensor>& in) {
            for (std::size_t k = 0; k < 2; ++k) {
                if (!wants_grad(in[k])) {
                    continue;
                }
                auto other = in[1 - k].data();
                auto dst = in[k].grad_accumulator();
                for (std::size_t i = 0; i < g.size(); ++i) {
                    dst[i] += g[i] * other[i];
                }
            }
        },
        "mul");
}

Tensor scale(const Tensor& a, double factor) {
    std::vector<double> out(a.data().begin(), a.data().end());
    for (double& v : out) {
        v *= factor;
    }
    return Tensor::from_op(
        a.shape(), std::move(out), {a},
        [factor](std::span<const double>, std::span<const double> g, const std::vector<Tensor>& in) {
            accumulate(in[0], g, factor);
        },
        "scale");
}

Tensor add_row(const Tensor& x, const Tensor& row_vec) {
    require_rank(row_vec, 1, "add_row", "row");
    const std::size_t n = row_vec.dim(0);
    if (x.shape().back() != n || x.rank() > 2) {
        throw ShapeError("add_row: cannot add " + shape_string(row_vec.shape()) + " to rows of " +
                         shape_string(x.shape()));
    }
    std::vector<double> out(x.data().begin(), x.data().end());
    auto r = row_vec.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] += r[i % n];
    }
    return Tensor::from_op(
        x.shape(), std::move(out), {x, row_vec},
        [n](std::span<const double>, std::span<const double> g, const std::vector<Tensor>& in) {
            accumulate(in[0], g);
            if (wants_grad(in[1])) {
                auto dst = in[1].grad_accumulator();
                for (std::size_t i = 0; i < g.size(); ++i) {
                    dst[i % n] += g[i];
                }
            }
        },
        "add_row");
}

Tensor sum(const Tensor& x) {
    double total = 0.0;
    for (double v : x.data()) {
        total += v;
    }
    return Tensor::from_op(
        Shape{1}, {total}, {x},
        [](std::span<const double>, std::span<const double> g, const std::vector<Tensor>& in) {
            if (!wants_grad(in[0])) {
                return;
            }
            for (double& v : in[0].grad_accumulator()) {
                v += g[0];
            }
        },
        "sum");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul", "left operand");
    require_rank(b, 2, "matmul", "right operand");
    const std::size_t m = a.dim(0);
    const std::size_t k = a.dim(1);
    const std::size_t n = b.dim(1);
    if (b.dim(0) != k) {
        throw ShapeError("matmul: inner dimensions differ for " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
    }
    auto ad = a.data();
    auto bd = b.data();
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t t = 0; t < k; ++t) {
            const double av = ad[i * k + t];
            for (std::size_t j = 0; j < n; ++j) {
                out[i * n + j] += av * bd[t * n + j];
            }
        }
    }
    return Tensor::from_op(
        Shape{m, n}, std::move(out), {a, b},
        [m, k, n](std::span<const double>, std::span<const double> g, const std::vector<Tensor>& in) {
            auto ad = in[0].data();
            auto bd = in[1].data();
            if (wants_grad(in[0])) {
                auto ga = in[0].grad_accumulator();
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t t = 0; t < k; ++t) {
                        double s = 0.0;
                        for (std::size_t j = 0; j < n; ++j) {
                            s += g[i * n + j] * bd[t * n + j];
                        }
                        ga[i * k + t] += s;
                    }
                }
            }
            if (wants_grad(in[1])) {
                auto gb = in[1].grad_accumulator();
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t t = 0; t < k; ++t) {
                        const double av = ad[i * k + t];
                        for (std::size_t j = 0; j < n; ++j) {
                            gb[t * n + j] += av * g[i * n + j];
                        }
                    }
                }
            }
        },
        "matmul");
}

Tensor transpose(const Tensor& x) {
    require_rank(x, 2, "transpose", "input");
    const std::size_t m = x.dim(0);
    const std::size_t n = x.dim(1);
    auto xd = x.data();
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out[j * m + i] = xd[i * n + j];
        }
    }
    return Tensor::from_op(
        Shape{n, m}, std::move(out), {x},
        [m, n](std::span<const double>, std::span<const double> g, const std::vector<Tensor>& in) {
            if (!wants_grad(in[0])) {
                return;
            }
            auto dst = in[0].grad_accumulator();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    dst[i * n + j] += g[j * m + i];
                }
            }
        },
        "transpose");
}

Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    require_rank(weight, 2, "affine", "weight");
    const std::size_t out_dim = weight.dim(0);
    const std::size_t in_dim = weight.dim(1);
    if ((x.rank() != 1 && x.rank() != 2) || x.shape().back() != in_dim) {
        throw ShapeError("affine: input " + shape_string(x.shape()) + " incompatible with weight " +
                         shape_string(weight.shape()));
    }
    if (bias.defined() && bias.shape() != Shape{out_dim}) {
        throw ShapeError("affine: bias " + shape_string(bias.shape()) + " incompatible with weight " +
                         shape_string(weight.shape()));
    }
    const std::size_t rows = x.rank() == 2 ? x.dim(0) : 1;
    Shape out_shape = x.rank() == 2 ? Shape{rows, out_dim} : Shape{out_dim};
    auto xd = x.data();
    auto wd = weight.data();
    std::vector<double> out(rows * out_dim);
    for (std::size_t t = 0; t < rows; ++t) {
        const double* xr = xd.data() + t * in_dim;
        for (std::size_t o = 0; o < out_dim; ++o) {
            const double* wr = wd.data() + o * in_dim;
            double s = bias.defined() ? bias.data()[o] : 0.0;
            for (std::size_t i = 0; i < in_dim; ++i) {
                s += xr[i] * wr[i];
            }
            out[t * out_dim + o] = s;
        }
    }
    return Tensor::from_op(
        std::move(out_shape), std::move(out), {x, weight, bias},
        [rows, in_dim, out_dim](std::span<const double>, std::span<const double> g, const std::vector<Tensor>& in) {
            auto xd = in[0].data();
            auto wd = in[1].data();
            if (wants_grad(in[0])) {
                auto gx = in[0].grad_accumulator();
                for (std::size_t t = 0; t < rows; ++t) {
                    for (std::size_t o = 0; o < out_dim; ++o) {
                        const double go = g[t * out_dim + o];
                        if (go == 0.0) {
                            continue;
                        }
                        const double* wr = wd.data() + o * in_dim;
                        double* gxr = gx.data() + t * in_dim;
                        for (std::size_t i = 0; i < in_dim; ++i) {
                            gxr[i] += go * wr[i];
                        }
                    }
                }
            }
            if (wants_grad(in[1])) {
                auto gw = in[1].grad_accumulator();
                for (std::size_t t = 0; t < rows; ++t) {
                    const double* xr = xd.data() + t * in_dim;
                    for (std::size_t o = 0; o < out_dim; ++o) {
                        const double go = g[t * out_dim + o];
                        if (go == 0.0) {
                            continue;
                        }
                        double* gwr = gw.data() + o * in_dim;
                        for (std::size_t i = 0; i < in_dim; ++i) {
                            gwr[i] += go * xr[i];
                        }
                    }
                }
            }
            if (wants_grad(in[2])) {
                auto gb = in[2].grad_accumulator();
                for (std::size_t t = 0; t < rows; ++t) {
                    for (std::size_t o = 0; o < out_dim; ++o) {
                        gb[o] += g[t * out_dim + o];
                    }
                }
            }
        },
        "affine");
}

namespace {

thread_local KinkMonitor* active_monitor = nullptr;

// Gap between the largest and runner-up of `count` values spaced `step` apart.
void note_max_gap(std::span<const double> values, std::size_t first, std::size_t count, std::size_t step) {
    double best = -std::numeric_limits<double>::infinity();
    double second = best;
    for (std::size_t j = 0; j < count; ++j) {
        const double v = values[first + j * step];
        if (v > best) {
            second = best;
            best = v;
        } else if (v > second) {
            second = v;
        }
    }
    const double gap = best - second;
    if (gap > 0.0 && std::isfinite(gap)) {
        active_monitor->note(gap);
    }
}

}  // namespace

KinkMonitor::KinkMonitor() : margin_(std::numeric_limits<double>::infinity()), previous_(active_monitor) {
    active_monitor = this;
}

KinkMonitor::~KinkMonitor() { active_monitor = previous_; }

Tensor activation(Activation kind, const Tensor& x) {
    std::vector<double> out(x.data().begin(), x.data().end());
    if (kind == Activation::relu && active_monitor != nullptr) {
        for (double v : out) {
            active_monitor->note(std::fabs(v));
            active_monitor->mix(v > 0.0 ? 1 : 0);
        }
    }
    for (double& v : out) {
        switch (kind) {
            case Activation::relu:
                v = v > 0.0 ? v : 0.0;
                break;
            case Activation::tanh:
                v = std::tanh(v);
                break;
            case Activation::sigmoid:
                v = 1.0 / (1.0 + std::exp(-v));
                break;
        }
    }
    const char* name = kind == Activation::relu ? "relu" : kind == Activation::tanh ? "tanh" : "sigmoid";
    return Tensor::from_op(
        x.shape(), std::move(out), {x},
        [kind](std::span<const double> y, std::span<const double> g, const std::vector<Tensor>& in) {
            if (!wants_grad(in[0])) {
                return;
            }
            auto dst = in[0].grad_accumulator();
            for (std::size_t i = 0; i < g.size(); ++i) {
                switch (kind) {
                    case Activation::relu:
                        dst[i] += y[i] > 0.0 ? g[i] : 0.0;
                        break;
                    case Activation::tanh:
                        dst[i] += g[i] * (1.0 - y[i] * y[i]);
                        break;
                    case Activation::sigmoid:
                        dst[i] += g[i] * y[i] * (1.0 - y[i]);
                        break;
                }
            }
        },
        name);
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw ShapeError("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
    }
    return Tensor::from_op(
        std::move(shape), std::vector<double>(x.data().begin(), x.data().end()), {x},
        [](std::span<const double>, std::span<const double> g, const std::vector<Tensor>& in) {
            accumulate(in[0], g);
        },
        "reshape");
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) {
        throw ShapeError("concat: no parts");
    }
    const Shape& first = parts[0].shape();
    if (axis >= first.size()) {
        throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " + shape_string(first));
    }
    if (parts.size() == 1) {
        return parts[0];
    }
    std::size_t outer = 1;
    std::size_t inner = 1;
    for (std::size_t d = 0; d < axis; ++d) {
        outer *= first[d];
    }
    for (std::size_t d = axis + 1; d < first.size(); ++d) {
        inner *= first[d];
    }
    Shape out_shape = first;
    out_shape[axis] = 0;
    std::vector<std::size_t> chunk;
    for (const Tensor& p : parts) {
        const Shape& s = p.shape();
        bool ok = s.size() == first.size();
        for (std::size_t d = 0; ok && d < s.size(); ++d) {
            ok = d == axis || s[d] == first[d];
        }
        if (!ok) {
            throw ShapeError("concat: incompatible shapes " + shape_string(first) + " and " + shape_string(s) +
                             " on axis " + std::to_string(axis));
        }
        out_shape[axis] += s[axis];
        chunk.push_back(s[axis] * inner);
    }
    const std::size_t row = out_shape[axis] * inner;
    std::vector<double> out(outer * row);
    std::size_t offset = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        auto pd = parts[p].data();
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy_n(pd.begin() + static_cast<std::ptrdiff_t>(o * chunk[p]), chunk[p],
                        out.begin() + static_cast<std::ptrdiff_t>(o * row + offset));
        }
        offset += chunk[p];
    }
    return Tensor::from_op(
        std::move(out_shape), std::move(out), parts,
        [outer, row, chunk](std::span<const double>, std::span<const double> g, const std::vector<Tensor>& in) {
            std::size_t offset = 0;
            for (std::size_t p = 0; p < in.size(); ++p) {
                if (wants_grad(in[p])) {
                    auto dst = in[p].grad_accumulator();
                    for (std::size_t o = 0; o < outer; ++o) {
                        for (std::size_t i = 0; i < chunk[p]; ++i) {
                            dst[o * chunk[p] + i] += g[o * row + offset + i];
                        }
                    }
                }
                offset += chunk[p];
            }
        },
        "concat");
}

Tensor stack(const std::vector<Tensor>& parts) {
    if (parts.empty()) {
        throw ShapeError("stack: no parts");
    }
    std::vector<Tensor> lifted;
    lifted.reserve(parts.size());
    for (const Tensor& p : parts) {
        if (p.shape() != parts[0].shape()) {
            throw ShapeError("stack: shapes differ, " + shape_string(parts[0].shape()) + " vs " +
                             shape_string(p.shape()));
        }
        Shape s{1};
        s.insert(s.end(), p.shape().begin(), p.shape().end());
        lifted.push_back(reshape(p, std::move(s)));
    }
    return concat(lifted, 0);
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
    const Shape& s = x.shape();
    if (axis >= s.size() || begin >= end || end > s[axis]) {
        throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " +
                         std::to_string(axis) + " invalid for " + shape_string(s));
    }
    std::size_t outer = 1;
    std::size_t inner = 1;
    for (std::size_t d = 0; d < axis; ++d) {
        outer *= s[d];
    }
    for (std::size_t d = axis + 1; d < s.size(); ++d) {
        inner *= s[d];
    }
    const std::size_t src_row = s[axis] * inner;
    const std::size_t len = (end - begin) * inner;
    const std::size_t start = begin * inner;
    Shape out_shape = s;
    out_shape[axis] = end - begin;
    auto xd = x.data();
    std::vector<double> out(outer * len);
    for (std::size_t o = 0; o < outer; ++o) {
        std::copy_n(xd.begin() + static_cast<std::ptrdiff_t>(o * src_row + start), len,
                    out.begin() + static_cast<std::ptrdiff_t>(o * len));
    }
    return Tensor::from_op(
        std::move(out_shape), std::move(out), {x},
        [outer, src_row, len, start](std::span<const double>, std::span<const double> g,
                                     const std::vector<Tensor>& in) {
            if (!wants_grad(in[0])) {
                return;
            }
            auto dst = in[0].grad_accumulator();
            for (std::size_t o = 0; o < outer; ++o) {
                for (std::size_t i = 0; i < len; ++i) {
                    dst[o * src_row + start + i] += g[o * len + i];
                }
            }
        },
        "slice");
}

Tensor row(const Tensor& x, std::size_t t) {
    require_rank(x, 2, "row", "input");
    if (t >= x.dim(0)) {
        throw ShapeError("row: index " + std::to_string(t) + " out of range for " + shape_string(x.shape()));
    }
    const std::size_t n = x.dim(1);
    auto xd = x.data();
    std::vector<double> out(xd.begin() + static_cast<std::ptrdiff_t>(t * n),
                            xd.begin() + static_cast<std::ptrdiff_t>((t + 1) * n));
    return Tensor::from_op(
        Shape{n}, std::move(out), {x},
        [t, n](std::span<const double>, std::span<const double> g, const std::vector<Tensor>& in) {
            if (!wants_grad(in[0])) {
                return;
            }
            auto dst = in[0].grad_accumulator();
            for (std::size_t i = 0; i < n; ++i) {
                dst[t * n + i] += g[i];
            }
        },
        "row");
}

Tensor conv1d(const Tensor& input, const Tensor& weights, const Tensor& bias, Padding padding) {
    require_rank(input, 2, "conv1d", "input");
    require_rank(weights, 3, "conv1d", "weights");
    const std::size_t steps = input.dim(0);
    const std::size_t din = input.dim(1);
    const std::size_t kernels = weights.dim(0);
    const std::size_t width = weights.dim(1);
    if (weights.dim(2) != din) {
        throw ShapeError("conv1d: weights " + shape_string(weights.shape()) + " incompatible with input " +
                         shape_string(input.shape()));
    }
    if (bias.shape() != Shape{kernels}) {
        throw ShapeError("conv1d: bias " + shape_string(bias.shape()) + " incompatible with weights " +
                         shape_string(weights.shape()));
    }
    std::size_t out_steps = steps;
    std::ptrdiff_t pad_left = 0;
    if (padding == Padding::valid) {
        if (steps < width) {
            throw SequenceTooShortError("conv1d: sequence length " + std::to_string(steps) +
                                        " shorter than kernel width " + std::to_string(width));
        }
        out_steps = steps - width + 1;
    } else {
        pad_left = static_cast<std::ptrdiff_t>((width - 1) / 2);
    }
    auto xd = input.data();
    auto wd = weights.data();
    auto bd = bias.data();
    const auto in_range = [steps](std::ptrdiff_t src) { return src >= 0 && src < static_cast<std::ptrdiff_t>(steps); };
    std::vector<double> out(out_steps * kernels);
    for (std::size_t t = 0; t < out_steps; ++t) {
        for (std::size_t k = 0; k < kernels; ++k) {
            double s = bd[k];
            for (std::size_t j = 0; j < width; ++j) {
                const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - pad_left;
                if (!in_range(src)) {
                    continue;
                }
                const double* xr = xd.data() + static_cast<std::size_t>(src) * din;
                const double* wr = wd.data() + (k * width + j) * din;
                for (std::size_t d = 0; d < din; ++d) {
                    s += xr[d] * wr[d];
                }
            }
            out[t * kernels + k] = s;
        }
    }
    return Tensor::from_op(
        Shape{out_steps, kernels}, std::move(out), {input, weights, bias},
        [=](std::span<const double>, std::span<const double> g, const std::vector<Tensor>& in) {
            auto xd = in[0].data();
            auto wd = in[1].data();
            std::span<double> gx;
            std::span<double> gw;
            if (wants_grad(in[0])) {
                gx = in[0].grad_accumulator();
            }
            if (wants_grad(in[1])) {
                gw = in[1].grad_accumulator();
            }
            if (wants_grad(in[2])) {
                auto gb = in[2].grad_accumulator();
                for (std::size_t t = 0; t < out_steps; ++t) {
                    for (std::size_t k = 0; k < kernels; ++k) {
                        gb[k] += g[t * kernels + k];
                    }
                }
            }
            if (gx.empty() && gw.empty()) {
                return;
            }
            for (std::size_t t = 0; t < out_steps; ++t) {
                for (std::size_t k = 0; k < kernels; ++k) {
                    const double go = g[t * kernels + k];
                    if (go == 0.0) {
                        continue;
                    }
                    for (std::size_t j = 0; j < width; ++j) {
                        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - pad_left;
                        if (!in_range(src)) {
                            continue;
                        }
                        const std::size_t xo = static_cast<std::size_t>(src) * din;
                        const std::size_t wo = (k * width + j) * din;
                        if (!gx.empty()) {
                            for (std::size_t d = 0; d < din; ++d) {
                                gx[xo + d] += go * wd[wo + d];
                            }
                        }
                        if (!gw.empty()) {
                            for (std::size_t d = 0; d < din; ++d) {
                                gw[wo + d] += go * xd[xo + d];
                            }
                        }
                    }
                }
            }
        },
        "conv1d");
}

Tensor max_over_time(const Tensor& input) {
    require_rank(input, 2, "max_over_time", "input");
    const std::size_t steps = input.dim(0);
    const std::size_t channels = input.dim(1);
    auto xd = input.data();
    std::vector<double> out(xd.begin(), xd.begin() + static_cast<std::ptrdiff_t>(channels));
    std::vector<std::size_t> argmax(channels, 0);
    if (active_monitor != nullptr && steps > 1) {
        for (std::size_t k = 0; k < channels; ++k) {
            note_max_gap(xd, k, steps, channels);
        }
    }
    for (std::size_t t = 1; t < steps; ++t) {
        for (std::size_t k = 0; k < channels; ++k) {
            const double v = xd[t * channels + k];
            if (v > out[k]) {
                out[k] = v;
                argmax[k] = t;
            }
        }
    }
    if (active_monitor != nullptr) {
        for (std::size_t a : argmax) {
            active_monitor->mix(a);
        }
    }
    return Tensor::from_op(
        Shape{channels}, std::move(out), {input},
        [channels, argmax = std::move(argmax)](std::span<const double>, std::span<const double> g,
                                               const std::vector<Tensor>& in) {
            if (!wants_grad(in[0])) {
                return;
            }
            auto dst = in[0].grad_accumulator();
            for (std::size_t k = 0; k < channels; ++k) {
                dst[argmax[k] * channels + k] += g[k];
            }
        },
        "max_over_time");
}

Tensor max_pool_1d(const Tensor& input, std::size_t window, std::size_t stride) {
    require_rank(input, 2, "max_pool_1d", "input");
    if (window == 0 || stride == 0) {
        throw ParameterError("max_pool_1d: window and stride must be positive");
    }
    const std::size_t steps = input.dim(0);
    const std::size_t channels = input.dim(1);
    if (steps < window) {
        throw SequenceTooShortError("max_pool_1d: sequence length " + std::to_string(steps) +
                                    " shorter than window " + std::to_string(window));
    }
    const std::size_t out_steps = (steps - window) / stride + 1;
    auto xd = input.data();
    std::vector<double> out(out_steps * channels);
    std::vector<std::size_t> argmax(out_steps * channels);
    for (std::size_t t = 0; t < out_steps; ++t) {
        for (std::size_t k = 0; k < channels; ++k) {
            std::size_t best = t * stride;
            for (std::size_t j = 1; j < window; ++j) {
                const std::size_t src = t * stride + j;
                if (xd[src * channels + k] > xd[best * channels + k]) {
                    best = src;
                }
            }
            if (active_monitor != nullptr && window > 1) {
                note_max_gap(xd, t * stride * channels + k, window, channels);
            }
            if (active_monitor != nullptr) {
                active_monitor->mix(best);
            }
            out[t * channels + k] = xd[best * channels + k];
            argmax[t * channels + k] = best * channels + k;
        }
    }
    return Tensor::from_op(
        Shape{out_steps, channels}, std::move(out), {input},
        [argmax = std::move(argmax)](std::span<const double>, std::span<const double> g,
                                     const std::vector<Tensor>& in) {
            if (!wants_grad(in[0])) {
                return;
            }
            auto dst = in[0].grad_accumulator();
            for (std::size_t i = 0; i < g.size(); ++i) {
                dst[argmax[i]] += g[i];
            }
        },
        "max_pool_1d");
}

Tensor dropout(const Tensor& x, double p, Mode mode, Rng* rng) {
    if (!(p >= 0.0 && p < 1.0)) {
        throw ParameterError("dropout: probability " + std::to_string(p) + " outside [0,1)");
    }
    if (mode == Mode::eval || p == 0.0) {
        return x;
    }
    if (rng == nullptr) {
        throw ParameterError("dropout: train mode requires a random generator");
    }
    const double keep_scale = 1.0 / (1.0 - p);
    std::vector<double> mask(x.numel());
    for (double& m : mask) {
        m = rng->uniform() < p ? 0.0 : keep_scale;
    }
    std::vector<double> out(x.data().begin(), x.data().end());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] *= mask[i];
    }
    return Tensor::from_op(
        x.shape(), std::move(out), {x},
        [mask = std::move(mask)](std::span<const double>, std::span<const double> g, const std::vector<Tensor>& in) {
            if (!wants_grad(in[0])) {
                return;
            }
            auto dst = in[0].grad_accumulator();
            for (std::size_t i = 0; i < g.size(); ++i) {
                dst[i] += g[i] * mask[i];
            }
        },
        "dropout");
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> targets) {
    require_rank(logits, 2, "softmax_cross_entropy", "logits");
    const std::size_t batch = logits.dim(0);
    const std::size_t classes = logits.dim(1);
    if (targets.size() != batch) {
        throw ShapeError("softmax_cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                         shape_string(logits.shape()));
    }
    auto z = logits.data();
    std::vector<double> probs(batch * classes);
    double loss = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        const int target = targets[b];
        if (target < 0 || static_cast<std::size_t>(target) >= classes) {
            throw LabelError("softmax_cross_entropy: target " + std::to_string(target) + " outside [0," +
                             std::to_string(classes) + ")");
        }
        const double* zr = z.data() + b * classes;
        const double zmax = *std::max_element(zr, zr + classes);
        double denom = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
            denom += std::exp(zr[c] - zmax);
        }
        for (std::size_t c = 0; c < classes; ++c) {
            probs[b * classes + c] = std::exp(zr[c] - zmax) / denom;
        }
        loss += std::log(denom) - (zr[target] - zmax);
    }
    loss /= static_cast<double>(batch);
    std::vector<int> labels(targets.begin(), targets.end());
    return Tensor::from_op(
        Shape{1}, {loss}, {logits},
        [batch, classes, probs = std::move(probs), labels = std::move(labels)](
            std::span<const double>, std::span<const double> g, const std::vector<Tensor>& in) {
            if (!wants_grad(in[0])) {
                return;
            }
            auto dst = in[0].grad_accumulator();
            const double factor = g[0] / static_cast<double>(batch);
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t c = 0; c < classes; ++c) {
                    const double onehot = static_cast<int>(c) == labels[b] ? 1.0 : 0.0;
                    dst[b * classes + c] += factor * (probs[b * classes + c] - onehot);
                }
            }
        },
        "softmax_cross_entropy");
}

Tensor masked_softmax(const Tensor& scores, std::size_t valid_columns) {
    require_rank(scores, 2, "masked_softmax", "scores");
    const std::size_t rows = scores.dim(0);
    const std::size_t cols = scores.dim(1);
    if (valid_columns == 0 || valid_columns > cols) {
        throw ShapeError("masked_softmax: " + std::to_string(valid_columns) + " valid columns for scores " +
                         shape_string(scores.shape()));
    }
    auto s = scores.data();
    std::vector<double> out(rows * cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* sr = s.data() + r * cols;
        const double smax = *std::max_element(sr, sr + valid_columns);
        double denom = 0.0;
        for (std::size_t c = 0; c < valid_columns; ++c) {
            out[r * cols + c] = std::exp(sr[c] - smax);
            denom += out[r * cols + c];
        }
        for (std::size_t c = 0; c < valid_columns; ++c) {
            out[r * cols + c] /= denom;
        }
    }
    return Tensor::from_op(
        scores.shape(), std::move(out), {scores},
        [rows, cols](std::span<const double> p, std::span<const double> g, const std::vector<Tensor>& in) {
            if (!wants_grad(in[0])) {
                return;
            }
            auto dst = in[0].grad_accumulator();
            for (std::size_t r = 0; r < rows; ++r) {
                double dot = 0.0;
                for (std::size_t c = 0; c < cols; ++c) {
                    dot += p[r * cols + c] * g[r * cols + c];
                }
                for (std::size_t c = 0; c < cols; ++c) {
                    dst[r * cols + c] += p[r * cols + c] * (g[r * cols + c] - dot);
                }
            }
        },
        "masked_softmax");
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    require_rank(x, 2, "layer_norm", "input");
    const std::size_t rows = x.dim(0);
    const std::size_t width = x.dim(1);
    if (gain.shape() != Shape{width} || bias.shape() != Shape{width}) {
        throw ShapeError("layer_norm: gain/bias must have shape [" + std::to_string(width) + "]");
    }
    auto xd = x.data();
    auto gd = gain.data();
    auto bd = bias.data();
    std::vector<double> normed(rows * width);
    std::vector<double> inv_std(rows);
    std::vector<double> out(rows * width);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = xd.data() + r * width;
        double mean = 0.0;
        for (std::size_t d = 0; d < width; ++d) {
            mean += xr[d];
        }
        mean /= static_cast<double>(width);
        double var = 0.0;
        for (std::size_t d = 0; d < width; ++d) {
            var += (xr[d] - mean) * (xr[d] - mean);
        }
        var /= static_cast<double>(width);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t d = 0; d < width; ++d) {
            const double n = (xr[d] - mean) * inv_std[r];
            normed[r * width + d] = n;
            out[r * width + d] = gd[d] * n + bd[d];
        }
    }
    return Tensor::from_op(
        x.shape(), std::move(out), {x, gain, bias},
        [rows, width, normed = std::move(normed), inv_std = std::move(inv_std)](
            std::span<const double>, std::span<const double> g, const std::vector<Tensor>& in) {
            auto gd = in[1].data();
            if (wants_grad(in[1])) {
                auto gg = in[1].grad_accumulator();
                for (std::size_t i = 0; i < g.size(); ++i) {
                    gg[i % width] += g[i] * normed[i];
                }
            }
            if (wants_grad(in[2])) {
                auto gb = in[2].grad_accumulator();
                for (std::size_t i = 0; i < g.size(); ++i) {
                    gb[i % width] += g[i];
                }
            }
            if (!wants_grad(in[0])) {
                return;
            }
            auto gx = in[0].grad_accumulator();
            const double n = static_cast<double>(width);
            for (std::size_t r = 0; r < rows; ++r) {
                double mean_g = 0.0;
                double mean_gn = 0.0;
                for (std::size_t d = 0; d < width; ++d) {
                    const double gh = g[r * width + d] * gd[d];
                    mean_g += gh;
                    mean_gn += gh * normed[r * width + d];
                }
                mean_g /= n;
                mean_gn /= n;
                for (std::size_t d = 0; d < width; ++d) {
                    const double gh = g[r * width + d] * gd[d];
                    gx[r * width + d] += inv_std[r] * (gh - mean_g - normed[r * width + d] * mean_gn);
                }
            }
        },
        "layer_norm");
}

Tensor gather_rows(const Tensor& table, std::span<const int> ids, int pad_id) {
    require_rank(table, 2, "gather_rows", "table");
    if (ids.empty()) {
        throw ShapeError("gather_rows: empty id sequence");
    }
    const std::size_t vocab = table.dim(0);
    const std::size_t width = table.dim(1);
    auto td = table.data();
    std::vector<double> out(ids.size() * width, 0.0);
    for (std::size_t t = 0; t < ids.size(); ++t) {
        const int id = ids[t];
        if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
            throw VocabularyError("token id " + std::to_string(id) + " outside vocabulary of size " +
                                  std::to_string(vocab));
        }
        if (id == pad_id) {
            continue;
        }
        std::copy_n(td.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(id) * width), width,
                    out.begin() + static_cast<std::ptrdiff_t>(t * width));
    }
    std::vector<int> kept(ids.begin(), ids.end());
    return Tensor::from_op(
        Shape{ids.size(), width}, std::move(out), {table},
        [width, pad_id, kept = std::move(kept)](std::span<const double>, std::span<const double> g,
                                                const std::vector<Tensor>& in) {
            if (!wants_grad(in[0])) {
                return;
            }
            auto dst = in[0].grad_accumulator();
            for (std::size_t t = 0; t < kept.size(); ++t) {
                if (kept[t] == pad_id) {
                    continue;
                }
                const std::size_t base = static_cast<std::size_t>(kept[t]) * width;
                for (std::size_t d = 0; d < width; ++d) {
                    dst[base + d] += g[t * width + d];
                }
            }
        },
        "gather_rows");
}

namespace {

double logistic(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

Tensor lstm_pointwise(const Tensor& gates, const Tensor& c) {
    require_rank(gates, 1, "lstm_pointwise", "gates");
    require_rank(c, 1, "lstm_pointwise", "cell state");
    const std::size_t hidden = c.dim(0);
    if (gates.dim(0) != 4 * hidden) {
        throw ShapeError("lstm_pointwise: gates " + shape_string(gates.shape()) + " incompatible with cell " +
                         shape_string(c.shape()));
    }
    auto z = gates.data();
    auto cd = c.data();
    std::vector<double> out(2 * hidden);
    for (std::size_t j = 0; j < hidden; ++j) {
        const double i = logistic(z[j]);
        const double f = logistic(z[hidden + j]);
        const double g = std::tanh(z[2 * hidden + j]);
        const double o = logistic(z[3 * hidden + j]);
        const double c_next = f * cd[j] + i * g;
        out[j] = o * std::tanh(c_next);
        out[hidden + j] = c_next;
    }
    return Tensor::from_op(
        Shape{2 * hidden}, std::move(out), {gates, c},
        [hidden](std::span<const double> y, std::span<const double> grad, const std::vector<Tensor>& in) {
            auto z = in[0].data();
            auto cd = in[1].data();
            std::span<double> gz;
            std::span<double> gc;
            if (wants_grad(in[0])) {
                gz = in[0].grad_accumulator();
            }
            if (wants_grad(in[1])) {
                gc = in[1].grad_accumulator();
            }
            for (std::size_t j = 0; j < hidden; ++j) {
                const double i = logistic(z[j]);
                const double f = logistic(z[hidden + j]);
                const double g = std::tanh(z[2 * hidden + j]);
                const double o = logistic(z[3 * hidden + j]);
                const double tc = std::tanh(y[hidden + j]);
                const double dh = grad[j];
                const double dc = grad[hidden + j] + dh * o * (1.0 - tc * tc);
                if (!gz.empty()) {
                    gz[j] += dc * g * i * (1.0 - i);
                    gz[hidden + j] += dc * cd[j] * f * (1.0 - f);
                    gz[2 * hidden + j] += dc * i * (1.0 - g * g);
                    gz[3 * hidden + j] += dh * tc * o * (1.0 - o);
                }
                if (!gc.empty()) {
                    gc[j] += dc * f;
                }
            }
        },
        "lstm_pointwise");
}

namespace {

void check_lstm_params(const LstmParams& p) {
    require_rank(p.w_input, 2, "lstm", "input weights");
    require_rank(p.w_hidden, 2, "lstm", "hidden weights");
    const std::size_t hidden = p.w_hidden.dim(1);
    if (p.w_hidden.dim(0) != 4 * hidden || p.w_input.dim(0) != 4 * hidden || p.bias.shape() != Shape{4 * hidden}) {
        throw ShapeError("lstm: inconsistent parameter shapes " + shape_string(p.w_input.shape()) + ", " +
                         shape_string(p.w_hidden.shape()) + ", " + shape_string(p.bias.shape()));
    }
}

LstmState lstm_step(const Tensor& input_gates, const LstmState& state, const LstmParams& params) {
    const std::size_t hidden = params.hidden();
    Tensor gates = add(input_gates, affine(state.h, params.w_hidden, Tensor()));
    Tensor both = lstm_pointwise(gates, state.c);
    return {slice(both, 0, 0, hidden), slice(both, 0, hidden, 2 * hidden)};
}

}  // namespace

LstmState lstm_cell(const Tensor& x, const Tensor& h, const Tensor& c, const LstmParams& params) {
    check_lstm_params(params);
    const std::size_t hidden = params.hidden();
    if (x.shape() != Shape{params.input()} || h.shape() != Shape{hidden} || c.shape() != Shape{hidden}) {
        throw ShapeError("lstm_cell: x " + shape_string(x.shape()) + ", h " + shape_string(h.shape()) + ", c " +
                         shape_string(c.shape()) + " do not match parameters with input " +
                         std::to_string(params.input()) + " and hidden " + std::to_string(hidden));
    }
    return lstm_step(affine(x, params.w_input, params.bias), LstmState{h, c}, params);
}

BiLstmOutput bilstm(const Tensor& seq, const std::vector<BiLstmLayerParams>& layers, double dropout_p, Mode mode,
                    Rng* rng) {
    require_rank(seq, 2, "bilstm", "sequence");
    if (layers.empty()) {
        throw ParameterError("bilstm: at least one layer is required");
    }
    const std::size_t steps = seq.dim(0);
    Tensor input = seq;
    std::vector<Tensor> forward_states;
    std::vector<Tensor> backward_states;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        if (l > 0) {
            input = dropout(input, dropout_p, mode, rng);
        }
        const BiLstmLayerParams& layer = layers[l];
        check_lstm_params(layer.forward);
        check_lstm_params(layer.backward);
        if (layer.forward.input() != input.dim(1) || layer.backward.input() != input.dim(1) ||
            layer.forward.hidden() != layer.backward.hidden()) {
            throw ShapeError("bilstm: layer " + std::to_string(l) + " expects input width " +
                             std::to_string(layer.forward.input()) + ", got " + shape_string(input.shape()));
        }
        const std::size_t hidden = layer.forward.hidden();
        forward_states.assign(steps, Tensor());
        backward_states.assign(steps, Tensor());

        Tensor projected = affine(input, layer.forward.w_input, layer.forward.bias);
        LstmState state{Tensor(Shape{hidden}), Tensor(Shape{hidden})};
        for (std::size_t t = 0; t < steps; ++t) {
            state = lstm_step(row(projected, t), state, layer.forward);
            forward_states[t] = state.h;
        }
        projected = affine(input, layer.backward.w_input, layer.backward.bias);
        state = LstmState{Tensor(Shape{hidden}), Tensor(Shape{hidden})};
        for (std::size_t t = steps; t-- > 0;) {
            state = lstm_step(row(projected, t), state, layer.backward);
            backward_states[t] = state.h;
        }
        input = concat({stack(forward_states), stack(backward_states)}, 1);
    }
    return {input, concat({forward_states.back(), backward_states.front()}, 0)};
}

std::vector<double> softmax(std::span<const double> logits) {
    std::vector<double> out(logits.begin(), logits.end());
    if (out.empty()) {
        return out;
    }
    const double zmax = *std::max_element(out.begin(), out.end());
    double denom = 0.0;
    for (double& v : out) {
        v = std::exp(v - zmax);
        denom += v;
    }
    for (double& v : out) {
        v /= denom;
    }
    return out;
}

}  // namespace textheads
