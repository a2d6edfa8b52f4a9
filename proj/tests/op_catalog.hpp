#pragma once

// Every differentiable op with inputs for a finite-difference check.

#include <string>
#include <vector>

#include "oracles.hpp"
#include "pear/ops.hpp"

namespace oracle {

struct OpCase {
    std::string name;
    std::function<pear::ad::Tensor<double>(const std::vector<pear::ad::Tensor<double>>&)> fn;
    std::vector<pear::ad::Tensor<double>> inputs;
};

/// Mask over (groups=2, rows=3, width=3) with one blocked pair per row.
inline const std::vector<float>& catalog_mask() {
    static const std::vector<float> m = {0, -1e9f, 0, 0, 0, -1e9f, -1e9f, 0, 0,
                                         0, 0, -1e9f, -1e9f, 0, 0, 0, -1e9f, 0};
    return m;
}

inline std::vector<OpCase> op_catalog() {
    namespace ad = pear::ad;
    using T = ad::Tensor<double>;
    using In = std::vector<T>;
    std::vector<OpCase> c;
    c.push_back({"add", [](const In& x) { return ad::add(x[0], x[1]); }, {random_tensor({3, 4}, 1), random_tensor({3, 4}, 2)}});
    c.push_back({"sub", [](const In& x) { return ad::sub(x[0], x[1]); }, {random_tensor({3, 4}, 3), random_tensor({3, 4}, 4)}});
    c.push_back({"mul", [](const In& x) { return ad::mul(x[0], x[1]); }, {random_tensor({3, 4}, 5), random_tensor({3, 4}, 6)}});
    c.push_back({"scale", [](const In& x) { return ad::scale(x[0], 0.37); }, {random_tensor({5}, 7)}});
    c.push_back({"add_trailing", [](const In& x) { return ad::add_trailing(x[0], x[1]); },
                 {random_tensor({2, 3, 4}, 8), random_tensor({3, 4}, 9)}});
    c.push_back({"sum", [](const In& x) { return ad::sum(x[0]); }, {random_tensor({4, 3}, 10)}});
    c.push_back({"mean", [](const In& x) { return ad::mean(x[0]); }, {random_tensor({4, 3}, 11)}});
    c.push_back({"reshape", [](const In& x) { return ad::reshape(x[0], {6, 2}); }, {random_tensor({3, 4}, 12)}});
    c.push_back({"permute", [](const In& x) { return ad::permute(x[0], {2, 0, 1, 3}); }, {random_tensor({2, 3, 4, 2}, 13)}});
    c.push_back({"gather_rows",
                 [](const In& x) {
                     static const std::vector<std::int64_t> idx{3, 0, 0, 2, 1};
                     return ad::gather_rows(x[0], std::span<const std::int64_t>(idx));
                 },
                 {random_tensor({4, 3}, 14)}});
    c.push_back({"concat", [](const In& x) { return ad::concat<double>({x[0], x[1]}, 1); },
                 {random_tensor({2, 3, 2}, 15), random_tensor({2, 1, 2}, 16)}});
    c.push_back({"slice", [](const In& x) { return ad::slice(x[0], 1, 1, 2); }, {random_tensor({3, 4}, 17)}});
    c.push_back({"split",
                 [](const In& x) {
                     auto parts = ad::split(x[0], 0, {1, 2});
                     return ad::concat<double>({ad::scale(parts[0], 2.0), parts[1]}, 0);
                 },
                 {random_tensor({3, 2}, 18)}});
    c.push_back({"matmul", [](const In& x) { return ad::matmul(x[0], x[1]); }, {random_tensor({3, 4}, 19), random_tensor({4, 5}, 20)}});
    c.push_back({"linear", [](const In& x) { return ad::linear(x[0], x[1], x[2]); },
                 {random_tensor({2, 3, 4}, 21), random_tensor({4, 5}, 22), random_tensor({5}, 23)}});
    c.push_back({"linear_no_bias", [](const In& x) { return ad::linear(x[0], x[1], T{}); },
                 {random_tensor({3, 4}, 24), random_tensor({4, 2}, 25)}});
    c.push_back({"bmm", [](const In& x) { return ad::bmm(x[0], x[1]); }, {random_tensor({2, 3, 4}, 26), random_tensor({2, 4, 2}, 27)}});
    c.push_back({"bmm_transpose", [](const In& x) { return ad::bmm(x[0], x[1], true); },
                 {random_tensor({2, 3, 4}, 28), random_tensor({2, 5, 4}, 29)}});
    c.push_back({"layer_norm", [](const In& x) { return ad::layer_norm(x[0], x[1], x[2]); },
                 {random_tensor({3, 6}, 30), random_tensor({6}, 31, 0.5, 1.5), random_tensor({6}, 32)}});
    c.push_back({"gelu", [](const In& x) { return ad::gelu(x[0]); }, {random_tensor({10}, 33, -3.0, 3.0)}});
    c.push_back({"softmax", [](const In& x) { return ad::softmax_with_mask(x[0]); }, {random_tensor({3, 5}, 34, -2.0, 2.0)}});
    c.push_back({"softmax_masked",
                 [](const In& x) {
                     return ad::softmax_with_mask(x[0], ad::MaskView{catalog_mask(), 2, 3, 3});
                 },
                 {random_tensor({2, 2, 3, 3}, 35, -2.0, 2.0)}});
    // Values kept apart so no |x - y| sits at a kink.
    c.push_back({"l1", [](const In& x) { return ad::l1(x[0], x[1]); }, {random_tensor({8}, 36, 0.5, 1.0), random_tensor({8}, 37, -1.0, 0.0)}});
    c.push_back({"attention",
                 [](const In& x) {
                     return ad::attention(x[0], x[1], x[2], x[3], ad::MaskView{catalog_mask(), 2, 3, 3});
                 },
                 {random_tensor({2, 2, 3, 4}, 38), random_tensor({2, 2, 3, 4}, 39), random_tensor({2, 2, 3, 4}, 40),
                  random_tensor({2, 9}, 41)}});
    return c;
}

}  // namespace oracle
