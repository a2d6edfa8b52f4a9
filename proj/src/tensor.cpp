#include "pear/tensor.hpp"

#include <sstream>
#include <unordered_set>
#include <utility>

#include "pear/errors.hpp"

namespace pear::ad {
namespace {

thread_local bool g_grad_enabled = true;

template <typename T>
std::vector<TensorImpl<T>*> topological_order(TensorImpl<T>* root) {
    std::vector<TensorImpl<T>*> order;
    std::unordered_set<TensorImpl<T>*> visited;
    // Iterative post-order DFS; (impl, next input to expand).
    std::vector<std::pair<TensorImpl<T>*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [impl, next] = stack.back();
        if (impl->node && next < impl->node->inputs.size()) {
            TensorImpl<T>* child = impl->node->inputs[next++].get();
            if (child->node && visited.insert(child).second) stack.emplace_back(child, 0);
            continue;
        }
        order.push_back(impl);
        stack.pop_back();
    }
    return order;
}

}  // namespace

std::int64_t numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
    os << ')';
    return os.str();
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values) {
    if (ad::numel(shape) != static_cast<std::int64_t>(values.size())) {
        throw DimensionError("Tensor::from: shape " + shape_str(shape) + " does not hold " +
                             std::to_string(values.size()) + " values");
    }
    auto impl = std::make_shared<TensorImpl<T>>();
    impl->shape = std::move(shape);
    impl->data = std::move(values);
    return Tensor(std::move(impl));
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
    const auto n = static_cast<std::size_t>(ad::numel(shape));
    return from(std::move(shape), std::vector<T>(n, value));
}

template <typename T>
T Tensor<T>::item() const {
    if (impl_->data.size() != 1) throw ContractError("item() on a tensor of shape " + shape_str(impl_->shape));
    return impl_->data[0];
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
    return from(impl_->shape, impl_->data);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, const char* op,
                      std::vector<std::shared_ptr<TensorImpl<T>>> inputs,
                      std::function<void(const TensorImpl<T>&)> backward_fn) {
    auto out = Tensor<T>::from(std::move(shape), std::move(data));
    if (!g_grad_enabled) return out;
    bool any = false;
    for (const auto& in : inputs) any = any || in->requires_grad;
    if (!any) return out;
    auto node = std::make_shared<Node<T>>();
    node->op = op;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward_fn);
    out.impl()->requires_grad = true;
    out.impl()->node = std::move(node);
    return out;
}

template <typename T>
void backward(const Tensor<T>& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw ContractError("backward() needs a scalar loss, got shape " +
                            (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
    }
    if (!loss.requires_grad()) throw ContractError("backward(): loss does not depend on any parameter");

    auto* root = loss.impl().get();
    const auto order = topological_order(root);
    root->ensure_grad()[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorImpl<T>* impl = *it;
        if (impl->node && !impl->grad.empty()) impl->node->backward(*impl);
    }
    for (TensorImpl<T>* impl : order) {
        if (impl->node) {
            impl->node.reset();
            if (impl != root) {
                impl->grad.clear();
                impl->grad.shrink_to_fit();
            }
        }
    }
}

template <typename T>
std::size_t tape_size(const Tensor<T>& t) {
    if (!t.defined() || !t.impl()->node) return 0;
    return topological_order(t.impl().get()).size();
}

template class Tensor<float>;
template class Tensor<double>;
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);
template std::size_t tape_size(const Tensor<float>&);
template std::size_t tape_size(const Tensor<double>&);
template Tensor<float> make_result(Shape, std::vector<float>, const char*,
                                   std::vector<std::shared_ptr<TensorImpl<float>>>,
                                   std::function<void(const TensorImpl<float>&)>);
template Tensor<double> make_result(Shape, std::vector<double>, const char*,
                                    std::vector<std::shared_ptr<TensorImpl<double>>>,
                                    std::function<void(const TensorImpl<double>&)>);

}  // namespace pear::ad
