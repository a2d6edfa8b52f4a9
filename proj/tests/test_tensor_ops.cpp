#include <doctest.h>

#include <cmath>

#include "op_catalog.hpp"
#include "oracles.hpp"
#include "pear/errors.hpp"
#include "pear/ops.hpp"
#include "pear/tensor.hpp"

using namespace pear;
using ad::Tensor;

TEST_SUITE("tensor_autodiff") {

TEST_CASE("every op passes a float64 central-difference check") {
    for (auto& c : oracle::op_catalog()) {
        CAPTURE(c.name);
        const double err = oracle::check_op(c.fn, c.inputs);
        CHECK(err < 1e-5);
    }
}

TEST_CASE("matmul and linear match loop products") {
    auto a = oracle::random_tensor({3, 4}, 1);
    auto b = oracle::random_tensor({4, 2}, 2);
    auto bias = oracle::random_tensor({2}, 3);
    const auto y = ad::linear(a, b, bias);
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 2; ++j) {
            double s = bias.data()[static_cast<std::size_t>(j)];
            for (int k = 0; k < 4; ++k) s += a.data()[static_cast<std::size_t>(i * 4 + k)] * b.data()[static_cast<std::size_t>(k * 2 + j)];
            CHECK(y.data()[static_cast<std::size_t>(i * 2 + j)] == doctest::Approx(s).epsilon(1e-14));
        }
    }
    CHECK_THROWS_AS(ad::matmul(a, a), DimensionError);
}

TEST_CASE("layer_norm, gelu and softmax match their formulas") {
    auto x = oracle::random_tensor({2, 5}, 4);
    auto g = Tensor<double>::full({5}, 1.0);
    auto b = Tensor<double>::zeros({5});
    const auto y = ad::layer_norm(x, g, b);
    for (int r = 0; r < 2; ++r) {
        double mu = 0, var = 0;
        for (int i = 0; i < 5; ++i) mu += x.data()[static_cast<std::size_t>(r * 5 + i)] / 5;
        for (int i = 0; i < 5; ++i) var += std::pow(x.data()[static_cast<std::size_t>(r * 5 + i)] - mu, 2) / 5;
        for (int i = 0; i < 5; ++i) {
            const double e = (x.data()[static_cast<std::size_t>(r * 5 + i)] - mu) / std::sqrt(var + ad::kLayerNormEps);
            CHECK(y.data()[static_cast<std::size_t>(r * 5 + i)] == doctest::Approx(e).epsilon(1e-12));
        }
    }
    const auto h = ad::gelu(x);
    for (std::size_t i = 0; i < 10; ++i) {
        const double v = x.data()[i];
        CHECK(h.data()[i] == doctest::Approx(0.5 * v * (1 + std::erf(v / std::sqrt(2.0)))).epsilon(1e-14));
    }
    const auto s = ad::softmax_with_mask(x);
    for (int r = 0; r < 2; ++r) {
        double z = 0;
        for (int i = 0; i < 5; ++i) z += std::exp(x.data()[static_cast<std::size_t>(r * 5 + i)]);
        for (int i = 0; i < 5; ++i) {
            CHECK(s.data()[static_cast<std::size_t>(r * 5 + i)] ==
                  doctest::Approx(std::exp(x.data()[static_cast<std::size_t>(r * 5 + i)]) / z).epsilon(1e-14));
        }
    }
}

TEST_CASE("masked softmax gives blocked pairs zero weight") {
    auto logits = oracle::random_tensor({2, 2, 3, 3}, 5);
    const auto p = ad::softmax_with_mask(logits, ad::MaskView{oracle::catalog_mask(), 2, 3, 3});
    const auto& m = oracle::catalog_mask();
    for (int g = 0; g < 2; ++g) {
        for (int h = 0; h < 2; ++h) {
            for (int i = 0; i < 9; ++i) {
                const double w = p.data()[static_cast<std::size_t>((g * 2 + h) * 9 + i)];
                if (m[static_cast<std::size_t>(g * 9 + i)] != 0.0f) CHECK(w == 0.0);
            }
        }
    }
}

TEST_CASE("attention equals the scalar oracle per window and head") {
    const std::int64_t nw = 2, nh = 2, w = 3, d = 4;
    auto q = oracle::random_tensor({nw, nh, w, d}, 6);
    auto k = oracle::random_tensor({nw, nh, w, d}, 7);
    auto v = oracle::random_tensor({nw, nh, w, d}, 8);
    auto bias = oracle::random_tensor({nh, w * w}, 9);
    const auto& mask = oracle::catalog_mask();
    const auto out = ad::attention(q, k, v, bias, ad::MaskView{mask, nw, w, w});
    for (std::int64_t g = 0; g < nw; ++g) {
        for (std::int64_t h = 0; h < nh; ++h) {
            auto block = [&](const Tensor<double>& t) {
                const auto off = static_cast<std::size_t>((g * nh + h) * w * d);
                return std::vector<double>(t.data().begin() + static_cast<std::ptrdiff_t>(off),
                                           t.data().begin() + static_cast<std::ptrdiff_t>(off + static_cast<std::size_t>(w * d)));
            };
            const std::vector<double> b(bias.data().begin() + h * w * w, bias.data().begin() + (h + 1) * w * w);
            const std::vector<float> m(mask.begin() + g * w * w, mask.begin() + (g + 1) * w * w);
            const auto ref = oracle::scalar_attention_head(block(q), block(k), block(v), b, m, w, d);
            const auto got = block(out);
            for (std::size_t i = 0; i < ref.size(); ++i) CHECK(got[i] == doctest::Approx(ref[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("permute moves elements to transposed positions") {
    auto x = oracle::random_tensor({2, 3, 4}, 10);
    const auto y = ad::permute(x, {2, 0, 1});
    CHECK(y.shape() == ad::Shape{4, 2, 3});
    for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 3; ++b) {
            for (int c = 0; c < 4; ++c) {
                CHECK(y.data()[static_cast<std::size_t>((c * 2 + a) * 3 + b)] == x.data()[static_cast<std::size_t>((a * 3 + b) * 4 + c)]);
            }
        }
    }
    CHECK_THROWS_AS(ad::permute(x, {0, 0, 1}), DimensionError);
}

TEST_CASE("gradients accumulate when a tensor is used twice") {
    auto x = Tensor<double>::from({3}, {1.0, -2.0, 0.5});
    x.set_requires_grad(true);
    ad::backward(ad::sum(ad::mul(x, x)));
    CHECK(x.grad()[0] == doctest::Approx(2.0));
    CHECK(x.grad()[1] == doctest::Approx(-4.0));
    CHECK(x.grad()[2] == doctest::Approx(1.0));
}

TEST_CASE("backward contracts") {
    auto x = oracle::random_tensor({3}, 11);
    x.set_requires_grad(true);
    CHECK_THROWS_AS(ad::backward(ad::scale(x, 2.0)), ContractError);
    auto c = oracle::random_tensor({3}, 12);
    CHECK_THROWS_AS(ad::backward(ad::sum(c)), ContractError);
    CHECK_THROWS_AS(ad::add(x, oracle::random_tensor({4}, 13)), DimensionError);
    CHECK_THROWS_AS(ad::reshape(x, {2, 2}), DimensionError);
}

TEST_CASE("no-grad scope records no tape") {
    auto x = oracle::random_tensor({3}, 14);
    x.set_requires_grad(true);
    {
        ad::NoGradGuard guard;
        const auto y = ad::sum(ad::mul(x, x));
        CHECK(ad::tape_size(y) == 0);
        CHECK_FALSE(y.requires_grad());
    }
    CHECK(ad::grad_enabled());
    const auto y = ad::sum(ad::mul(x, x));
    CHECK(ad::tape_size(y) == 2);
}

TEST_CASE("each node runs once on a diamond-shaped graph") {
    // y = sum(a * b) with a = 2x and b = a + x.
    auto x = Tensor<double>::from({2}, {0.3, -1.2});
    x.set_requires_grad(true);
    auto a = ad::scale(x, 2.0);
    auto b = ad::add(a, x);
    ad::backward(ad::sum(ad::mul(a, b)));
    // a*b = 2x * 3x = 6x^2, derivative 12x.
    CHECK(x.grad()[0] == doctest::Approx(12 * 0.3));
    CHECK(x.grad()[1] == doctest::Approx(12 * -1.2));
}

TEST_CASE("float32 ops agree with float64 to single precision") {
    auto x64 = oracle::random_tensor({4, 6}, 15);
    auto w64 = oracle::random_tensor({6, 3}, 16);
    auto x32 = Tensor<float>::from({4, 6}, std::vector<float>(x64.data().begin(), x64.data().end()));
    auto w32 = Tensor<float>::from({6, 3}, std::vector<float>(w64.data().begin(), w64.data().end()));
    const auto y64 = ad::gelu(ad::matmul(x64, w64));
    const auto y32 = ad::gelu(ad::matmul(x32, w32));
    for (std::size_t i = 0; i < 12; ++i) CHECK(y32.data()[i] == doctest::Approx(y64.data()[i]).epsilon(1e-5));
}

}  // TEST_SUITE
