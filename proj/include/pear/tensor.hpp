#pragma once

// Dense row-major tensors with reverse-mode differentiation.
//
// Every op that has at least one input requiring gradients (while gradient
// recording is enabled on the current thread) attaches a Node to its output.
// backward() orders the reachable nodes topologically, runs each backward
// rule exactly once in reverse order and then drops the graph.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace pear::ad {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
struct TensorImpl;

template <typename T>
struct Node {
    const char* op = "";
    std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
    /// Reads out.grad and accumulates into the inputs' grads.
    std::function<void(const TensorImpl<T>& out)> backward;
};

template <typename T>
struct TensorImpl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::shared_ptr<Node<T>> node;  // null for leaves

    std::vector<T>& ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), T(0));
        return grad;
    }
};

template <typename T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorImpl<T>> impl) : impl_(std::move(impl)) {}

    static Tensor from(Shape shape, std::vector<T> values);
    static Tensor zeros(Shape shape) { return full(std::move(shape), T(0)); }
    static Tensor full(Shape shape, T value);
    static Tensor scalar(T value) { return full({}, value); }

    bool defined() const { return static_cast<bool>(impl_); }
    const Shape& shape() const { return impl_->shape; }
    std::int64_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
    std::size_t rank() const { return impl_->shape.size(); }
    std::int64_t numel() const { return static_cast<std::int64_t>(impl_->data.size()); }

    std::span<T> data() { return impl_->data; }
    std::span<const T> data() const { return impl_->data; }
    std::vector<T>& values() { return impl_->data; }
    const std::vector<T>& values() const { return impl_->data; }
    T item() const;

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool flag) {
        impl_->requires_grad = flag;
        return *this;
    }
    bool has_grad() const { return !impl_->grad.empty(); }
    std::span<const T> grad() const { return impl_->grad; }
    std::span<T> grad() { return impl_->ensure_grad(); }
    void zero_grad() { impl_->grad.clear(); }

    /// New leaf sharing no storage or history with this tensor.
    Tensor detach() const;

    const std::shared_ptr<TensorImpl<T>>& impl() const { return impl_; }

private:
    std::shared_ptr<TensorImpl<T>> impl_;
};

/// Gradient recording is on by default; this disables it for the current
/// thread while in scope.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

/// Populates grads of every leaf reachable from `loss`, which must be a
/// single-element tensor. The recorded graph is released afterwards.
template <typename T>
void backward(const Tensor<T>& loss);

/// Number of distinct nodes reachable from `t` (the size of its tape).
template <typename T>
std::size_t tape_size(const Tensor<T>& t);

/// Builds an op output; attaches a node when any input requires grad.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, const char* op,
                      std::vector<std::shared_ptr<TensorImpl<T>>> inputs,
                      std::function<void(const TensorImpl<T>&)> backward_fn);

}  // namespace pear::ad
