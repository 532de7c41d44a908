#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace textheads {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {
struct TensorImpl;
}

class Tensor;

/// Backward rule of a recorded operation. Receives the forward output and the
/// gradient flowing into it, and accumulates into the grads of `inputs` that
/// require them (see Tensor::grad_accumulator).
using BackwardRule = std::function<void(std::span<const double> out_data, std::span<const double> out_grad,
                                        const std::vector<Tensor>& inputs)>;

/// Dense row-major double tensor with an optional link into the computation
/// graph. Copies share storage; use detach() for a deep copy.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor scalar(double value);

    bool defined() const noexcept { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const double> data() const;
    std::span<double> mutable_data();
    double item() const;
    double at(std::size_t i) const;
    double at(std::size_t i, std::size_t j) const;
    double at(std::size_t i, std::size_t j, std::size_t k) const;

    bool requires_grad() const;
    Tensor& set_requires_grad(bool value);
    bool has_grad() const;
    std::span<const double> grad() const;
    /// Grad buffer, allocated as zeros on first use.
    std::span<double> grad_accumulator() const;
    void zero_grad();

    bool is_leaf() const;
    std::string_view op_name() const;

    /// Reverse-mode sweep from this scalar. Leaf gradients accumulate across
    /// calls until zero_grad().
    void backward() const;

    /// Deep copy with no graph linkage; requires_grad is preserved.
    Tensor detach() const;

    /// Number of distinct graph nodes reachable from this tensor that take
    /// part in backward.
    std::size_t graph_size() const;

    /// Records a new operation result. This is how every op in ops.hpp is built
    /// and is the extension point for custom ops.
    static Tensor from_op(Shape shape, std::vector<double> values, std::vector<Tensor> inputs, BackwardRule rule,
                          std::string_view name);

    bool same_storage(const Tensor& other) const noexcept { return impl_ == other.impl_; }

private:
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
    detail::TensorImpl& impl() const;
    static std::vector<detail::TensorImpl*> collect_graph(detail::TensorImpl* root);

    std::shared_ptr<detail::TensorImpl> impl_;
};

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled() noexcept;

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

using ParamList = std::vector<NamedTensor>;

std::size_t parameter_count(const ParamList& params);

}  // namespace textheads
