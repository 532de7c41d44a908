#include "textheads/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "textheads/error.hpp"

namespace textheads {

namespace detail {

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;

    // Graph linkage; empty for leaves.
    std::vector<Tensor> inputs;
    BackwardRule rule;
    std::string_view op;
    std::uint64_t sequence = 0;
};

}  // namespace detail

namespace {

thread_local bool t_grad_enabled = true;
thread_local std::uint64_t t_next_sequence = 1;

}  // namespace

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) {
        n *= d;
    }
    return n;
}

std::string shape_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) {
            out += ",";
        }
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

Tensor::Tensor(Shape shape, double fill) : Tensor(shape, std::vector<double>(shape_numel(shape), fill)) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : impl_(std::make_shared<detail::TensorImpl>()) {
    for (std::size_t d : shape) {
        if (d == 0) {
            throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape));
        }
    }
    if (values.size() != shape_numel(shape)) {
        throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                         shape_string(shape));
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(values);
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{1}, std::vector<double>{value}); }

detail::TensorImpl& Tensor::impl() const {
    if (!impl_) {
        throw GraphError("use of an undefined tensor");
    }
    return *impl_;
}

const Shape& Tensor::shape() const { return impl().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    const Shape& s = shape();
    if (axis >= s.size()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_string(s));
    }
    return s[axis];
}

std::size_t Tensor::numel() const { return impl().data.size(); }

std::span<const double> Tensor::data() const { return impl().data; }

std::span<double> Tensor::mutable_data() { return impl().data; }

double Tensor::item() const {
    if (numel() != 1) {
        throw ShapeError("item() on tensor of shape " + shape_string(shape()));
    }
    return impl().data[0];
}

double Tensor::at(std::size_t i) const { return impl().data.at(i); }

double Tensor::at(std::size_t i, std::size_t j) const {
    const Shape& s = shape();
    return impl().data.at(i * s.at(1) + j);
}

double Tensor::at(std::size_t i, std::size_t j, std::size_t k) const {
    const Shape& s = shape();
    return impl().data.at((i * s.at(1) + j) * s.at(2) + k);
}

bool Tensor::requires_grad() const { return impl().requires_grad; }

Tensor& Tensor::set_requires_grad(bool value) {
    if (!is_leaf()) {
        throw GraphError("requires_grad can only be changed on leaf tensors");
    }
    impl().requires_grad = value;
    return *this;
}

bool Tensor::has_grad() const { return !impl().grad.empty(); }

std::span<const double> Tensor::grad() const { return impl().grad; }

std::span<double> Tensor::grad_accumulator() const {
    auto& self = impl();
    if (self.grad.empty()) {
        self.grad.assign(self.data.size(), 0.0);
    }
    return self.grad;
}

void Tensor::zero_grad() {
    auto& self = impl();
    std::fill(self.grad.begin(), self.grad.end(), 0.0);
}

bool Tensor::is_leaf() const { return !impl().rule; }

std::string_view Tensor::op_name() const { return is_leaf() ? std::string_view("leaf") : impl().op; }

Tensor Tensor::detach() const {
    Tensor copy(impl().shape, impl().data);
    copy.impl_->requires_grad = impl().requires_grad;
    return copy;
}

Tensor Tensor::from_op(Shape shape, std::vector<double> values, std::vector<Tensor> inputs, BackwardRule rule,
                       std::string_view name) {
    Tensor out(std::move(shape), std::move(values));
    if (!t_grad_enabled) {
        return out;
    }
    const bool any = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.defined() && t.requires_grad(); });
    if (!any) {
        return out;
    }
    auto& impl = *out.impl_;
    impl.requires_grad = true;
    impl.inputs = std::move(inputs);
    impl.rule = std::move(rule);
    impl.op = name;
    impl.sequence = t_next_sequence++;
    return out;
}

// Nodes reachable from root that require grad, each exactly once.
std::vector<detail::TensorImpl*> Tensor::collect_graph(detail::TensorImpl* root) {
    std::vector<detail::TensorImpl*> nodes;
    std::unordered_set<detail::TensorImpl*> seen{root};
    std::vector<detail::TensorImpl*> stack{root};
    while (!stack.empty()) {
        detail::TensorImpl* node = stack.back();
        stack.pop_back();
        nodes.push_back(node);
        for (const Tensor& in : node->inputs) {
            detail::TensorImpl* next = in.impl_.get();
            if (next == nullptr || !next->requires_grad || !seen.insert(next).second) {
                continue;
            }
            stack.push_back(next);
        }
    }
    return nodes;
}

std::size_t Tensor::graph_size() const { return collect_graph(impl_.get()).size(); }

void Tensor::backward() const {
    auto& self = impl();
    if (!self.requires_grad) {
        throw GraphError("backward() called on a tensor that is not part of a recorded graph");
    }
    if (self.data.size() != 1) {
        throw GraphError("backward() requires a scalar loss, got shape " + shape_string(self.shape));
    }
    std::vector<detail::TensorImpl*> nodes = collect_graph(impl_.get());
    // Creation order is a topological order: inputs always exist before outputs.
    std::sort(nodes.begin(), nodes.end(),
              [](const detail::TensorImpl* a, const detail::TensorImpl* b) { return a->sequence > b->sequence; });
    if (self.grad.empty()) {
        self.grad.assign(1, 0.0);
    }
    self.grad[0] += 1.0;
    for (detail::TensorImpl* node : nodes) {
        if (!node->rule || node->grad.empty()) {
            continue;
        }
        node->rule(node->data, node->grad, node->inputs);
    }
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_enabled() noexcept { return t_grad_enabled; }

std::size_t parameter_count(const ParamList& params) {
    std::size_t n = 0;
    for (const auto& p : params) {
        n += p.tensor.numel();
    }
    return n;
}

}  // namespace textheads
