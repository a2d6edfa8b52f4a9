#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pear/tensor.hpp"

namespace pear::ad {

struct AdamWConfig {
    double lr = 5e-4;
    double weight_decay = 3e-6;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One AdamW update of a flat parameter block. `step` is the 1-based count
/// of updates including this one. Weight decay is decoupled: the parameter
/// shrinks by lr * weight_decay * param before the adaptive step.
template <typename T>
void adamw_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v, std::int64_t step,
                  const AdamWConfig& cfg);

template <typename T>
class AdamW {
public:
    AdamW(std::vector<Tensor<T>> params, AdamWConfig cfg);

    /// Applies one update from the parameters' accumulated grads. A missing
    /// grad counts as zero. Throws NonFiniteError, leaving every parameter
    /// untouched, when any grad holds a NaN or infinity.
    void step();
    void zero_grad();

    const AdamWConfig& config() const { return cfg_; }
    void set_lr(double lr) { cfg_.lr = lr; }
    std::int64_t step_count() const { return step_; }
    void set_step_count(std::int64_t step) { step_ = step; }

    std::size_t size() const { return params_.size(); }
    std::vector<T>& first_moment(std::size_t i) { return m_.at(i); }
    std::vector<T>& second_moment(std::size_t i) { return v_.at(i); }
    const std::vector<T>& first_moment(std::size_t i) const { return m_.at(i); }
    const std::vector<T>& second_moment(std::size_t i) const { return v_.at(i); }

private:
    std::vector<Tensor<T>> params_;
    AdamWConfig cfg_;
    std::vector<std::vector<T>> m_;
    std::vector<std::vector<T>> v_;
    std::int64_t step_ = 0;
};

}  // namespace pear::ad
