#include "pear/optim.hpp"

#include <cmath>
#include <string>

#include "pear/errors.hpp"

namespace pear::ad {

template <typename T>
void adamw_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v, std::int64_t step,
                  const AdamWConfig& cfg) {
    if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size()) {
        throw DimensionError("adamw_update: parameter, grad and moment sizes differ");
    }
    if (step < 1) throw ContractError("adamw_update: step counter must be >= 1");
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    const T decay = static_cast<T>(1.0 - cfg.lr * cfg.weight_decay);
    const T b1 = static_cast<T>(cfg.beta1);
    const T b2 = static_cast<T>(cfg.beta2);
    const T step_size = static_cast<T>(cfg.lr / bc1);
    const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
    const T eps = static_cast<T>(cfg.eps);
    for (std::size_t i = 0; i < param.size(); ++i) {
        const T g = grad[i];
        param[i] *= decay;
        m[i] = b1 * m[i] + (T(1) - b1) * g;
        v[i] = b2 * v[i] + (T(1) - b2) * g * g;
        param[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + eps);
    }
}

template <typename T>
AdamW<T>::AdamW(std::vector<Tensor<T>> params, AdamWConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    if (!(cfg_.lr > 0.0)) throw ConfigError("AdamW: learning rate must be positive");
    for (const auto& p : params_) {
        m_.emplace_back(static_cast<std::size_t>(p.numel()), T(0));
        v_.emplace_back(static_cast<std::size_t>(p.numel()), T(0));
    }
}

template <typename T>
void AdamW<T>::step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        for (T g : params_[i].grad()) {
            if (!std::isfinite(g)) {
                throw NonFiniteError("AdamW: non-finite gradient in parameter #" + std::to_string(i) +
                                     " of shape " + shape_str(params_[i].shape()) + "; step rejected");
            }
        }
    }
    ++step_;
    std::vector<T> zeros;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i];
        std::span<const T> g = p.grad();
        if (g.empty()) {
            zeros.assign(static_cast<std::size_t>(p.numel()), T(0));
            g = zeros;
        }
        adamw_update<T>(p.data(), g, m_[i], v_[i], step_, cfg_);
    }
}

template <typename T>
void AdamW<T>::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

template void adamw_update<float>(std::span<float>, std::span<const float>, std::span<float>, std::span<float>,
                                  std::int64_t, const AdamWConfig&);
template void adamw_update<double>(std::span<double>, std::span<const double>, std::span<double>, std::span<double>,
                                   std::int64_t, const AdamWConfig&);
template class AdamW<float>;
template class AdamW<double>;

}  // namespace pear::ad
