#pragma once

// Straight-line reference implementations used to check the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include "pear/hpx_grid.hpp"
#include "pear/ops.hpp"
#include "pear/tensor.hpp"

namespace oracle {

/// Nested indices sorted by (colatitude, azimuth) of their centers.
inline std::vector<std::int64_t> ring_order_by_sorting(const pear::hpx::GridSpec& spec) {
    std::vector<std::int64_t> idx(static_cast<std::size_t>(spec.n_pix));
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<pear::hpx::SphereCoord> c(idx.size());
    for (auto p : idx) c[static_cast<std::size_t>(p)] = pear::hpx::pixel_center(spec, {pear::hpx::Scheme::nested, p});
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) {
        const auto& ca = c[static_cast<std::size_t>(a)];
        const auto& cb = c[static_cast<std::size_t>(b)];
        if (std::abs(ca.theta - cb.theta) > 1e-9) return ca.theta < cb.theta;
        return ca.phi < cb.phi;
    });
    return idx;
}

/// Masks from explicit provenance tracking. Every voxel is tagged with its
/// original (ring, level); the ring-ordered volume is rolled by (-shift_hp,
/// -shift_d) cell by cell, a cell's region records whether its content
/// crossed the end of the ring sequence or of the vertical axis, and the
/// nested-order volume is cut into windows. Returns n_windows blocks of W*W.
inline std::vector<float> provenance_masks(const pear::hpx::GridSpec& spec, std::int64_t depth,
                                           std::int64_t window_hp, std::int64_t window_d, std::int64_t shift_hp,
                                           std::int64_t shift_d, float large = 1.0e9f) {
    const auto n_pix = spec.n_pix;
    // ring_volume[r][l] holds the original (ring, level) of the content.
    struct Tag {
        std::int64_t ring, level;
    };
    std::vector<std::vector<Tag>> vol(static_cast<std::size_t>(n_pix), std::vector<Tag>(static_cast<std::size_t>(depth)));
    for (std::int64_t r = 0; r < n_pix; ++r) {
        for (std::int64_t l = 0; l < depth; ++l) vol[static_cast<std::size_t>(r)][static_cast<std::size_t>(l)] = {r, l};
    }
    // Roll one step at a time so the wrap is literally observed.
    std::vector<std::vector<int>> crossed_ring(static_cast<std::size_t>(n_pix), std::vector<int>(static_cast<std::size_t>(depth), 0));
    auto crossed_level = crossed_ring;
    for (std::int64_t s = 0; s < shift_hp; ++s) {
        auto next = vol;
        auto next_cross = crossed_ring;
        auto next_cross_l = crossed_level;
        for (std::int64_t r = 0; r < n_pix; ++r) {
            const auto dst = (r - 1 + n_pix) % n_pix;
            for (std::int64_t l = 0; l < depth; ++l) {
                next[static_cast<std::size_t>(dst)][static_cast<std::size_t>(l)] = vol[static_cast<std::size_t>(r)][static_cast<std::size_t>(l)];
                next_cross[static_cast<std::size_t>(dst)][static_cast<std::size_t>(l)] =
                    crossed_ring[static_cast<std::size_t>(r)][static_cast<std::size_t>(l)] | (r == 0 ? 1 : 0);
                next_cross_l[static_cast<std::size_t>(dst)][static_cast<std::size_t>(l)] =
                    crossed_level[static_cast<std::size_t>(r)][static_cast<std::size_t>(l)];
            }
        }
        vol = next;
        crossed_ring = next_cross;
        crossed_level = next_cross_l;
    }
    for (std::int64_t s = 0; s < shift_d; ++s) {
        auto next = vol;
        auto next_cross = crossed_ring;
        auto next_cross_l = crossed_level;
        for (std::int64_t r = 0; r < n_pix; ++r) {
            for (std::int64_t l = 0; l < depth; ++l) {
                const auto dst = (l - 1 + depth) % depth;
                next[static_cast<std::size_t>(r)][static_cast<std::size_t>(dst)] = vol[static_cast<std::size_t>(r)][static_cast<std::size_t>(l)];
                next_cross[static_cast<std::size_t>(r)][static_cast<std::size_t>(dst)] =
                    crossed_ring[static_cast<std::size_t>(r)][static_cast<std::size_t>(l)];
                next_cross_l[static_cast<std::size_t>(r)][static_cast<std::size_t>(dst)] =
                    crossed_level[static_cast<std::size_t>(r)][static_cast<std::size_t>(l)] | (l == 0 ? 1 : 0);
            }
        }
        vol = next;
        crossed_ring = next_cross;
        crossed_level = next_cross_l;
    }

    // Windows: consecutive nested pixel blocks times consecutive level blocks.
    const auto n_hblocks = n_pix / window_hp;
    const auto n_vblocks = depth / window_d;
    const auto wv = window_hp * window_d;
    std::vector<float> out;
    for (std::int64_t hb = 0; hb < n_hblocks; ++hb) {
        for (std::int64_t vb = 0; vb < n_vblocks; ++vb) {
            std::vector<int> region;
            for (std::int64_t i = 0; i < window_hp; ++i) {
                const auto nested = hb * window_hp + i;
                const auto ring = pear::hpx::nest2ring(spec, nested);
                for (std::int64_t dl = 0; dl < window_d; ++dl) {
                    const auto l = vb * window_d + dl;
                    region.push_back(crossed_ring[static_cast<std::size_t>(ring)][static_cast<std::size_t>(l)] +
                                     2 * crossed_level[static_cast<std::size_t>(ring)][static_cast<std::size_t>(l)]);
                }
            }
            for (std::int64_t i = 0; i < wv; ++i) {
                for (std::int64_t j = 0; j < wv; ++j) {
                    out.push_back(region[static_cast<std::size_t>(i)] == region[static_cast<std::size_t>(j)] ? 0.0f : -large);
                }
            }
        }
    }
    return out;
}

/// ||analytic - numeric||_2 / max(||analytic||_2, ||numeric||_2) with central
/// differences of `f` over every entry of every input.
inline double fd_relative_error(const std::function<double()>& f, const std::vector<pear::ad::Tensor<double>>& inputs,
                                const std::vector<std::vector<double>>& analytic, double h = 1e-6) {
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        auto x = inputs[t];
        auto data = x.data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double keep = data[i];
            data[i] = keep + h;
            const double fp = f();
            data[i] = keep - h;
            const double fm = f();
            data[i] = keep;
            const double num = (fp - fm) / (2.0 * h);
            const double ana = analytic[t][i];
            diff2 += (num - ana) * (num - ana);
            a2 += ana * ana;
            n2 += num * num;
        }
    }
    const double denom = std::sqrt(std::max(a2, n2));
    return denom == 0.0 ? std::sqrt(diff2) : std::sqrt(diff2) / denom;
}

inline std::vector<double> random_values(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

inline pear::ad::Tensor<double> random_tensor(pear::ad::Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    const auto n = static_cast<std::size_t>(pear::ad::numel(shape));
    return pear::ad::Tensor<double>::from(std::move(shape), random_values(n, seed, lo, hi));
}

/// Checks d/dx sum(op(inputs) * R) against central differences; returns the
/// relative error. Inputs must require grad.
inline double check_op(const std::function<pear::ad::Tensor<double>(const std::vector<pear::ad::Tensor<double>>&)>& op,
                       std::vector<pear::ad::Tensor<double>> inputs, std::uint64_t seed = 99) {
    using pear::ad::Tensor;
    for (auto& x : inputs) {
        x.set_requires_grad(true);
        x.zero_grad();
    }
    Tensor<double> out = op(inputs);
    const auto r = random_values(static_cast<std::size_t>(out.numel()), seed);
    auto proj = Tensor<double>::from(out.shape(), r);
    pear::ad::backward(pear::ad::sum(pear::ad::mul(out, proj)));
    std::vector<std::vector<double>> analytic;
    for (auto& x : inputs) {
        analytic.emplace_back(x.has_grad() ? std::vector<double>(x.grad().begin(), x.grad().end())
                                           : std::vector<double>(static_cast<std::size_t>(x.numel()), 0.0));
    }
    auto f = [&] {
        pear::ad::NoGradGuard guard;
        const auto y = op(inputs);
        double s = 0.0;
        for (std::size_t i = 0; i < r.size(); ++i) s += y.data()[i] * r[i];
        return s;
    };
    return fd_relative_error(f, inputs, analytic);
}

/// softmax(q k^T / sqrt(d) + bias + mask) v for one window and one head, all loops.
inline std::vector<double> scalar_attention_head(const std::vector<double>& q, const std::vector<double>& k,
                                                 const std::vector<double>& v, const std::vector<double>& bias,
                                                 const std::vector<float>& mask, std::int64_t w, std::int64_t d) {
    std::vector<double> out(static_cast<std::size_t>(w * d), 0.0);
    for (std::int64_t i = 0; i < w; ++i) {
        std::vector<double> logits(static_cast<std::size_t>(w));
        double mx = -1e300;
        for (std::int64_t j = 0; j < w; ++j) {
            double s = 0.0;
            for (std::int64_t c = 0; c < d; ++c) s += q[static_cast<std::size_t>(i * d + c)] * k[static_cast<std::size_t>(j * d + c)];
            s = s / std::sqrt(static_cast<double>(d)) + bias[static_cast<std::size_t>(i * w + j)];
            if (!mask.empty()) s += mask[static_cast<std::size_t>(i * w + j)];
            logits[static_cast<std::size_t>(j)] = s;
            mx = std::max(mx, s);
        }
        double z = 0.0;
        for (auto& s : logits) {
            s = std::exp(s - mx);
            z += s;
        }
        for (std::int64_t j = 0; j < w; ++j) {
            for (std::int64_t c = 0; c < d; ++c) {
                out[static_cast<std::size_t>(i * d + c)] += logits[static_cast<std::size_t>(j)] / z * v[static_cast<std::size_t>(j * d + c)];
            }
        }
    }
    return out;
}

/// One AdamW step on scalars.
inline void scalar_adamw(double& p, double g, double& m, double& v, std::int64_t t, double lr, double wd, double b1,
                         double b2, double eps) {
    p -= lr * wd * p;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mhat = m / (1 - std::pow(b1, static_cast<double>(t)));
    const double vhat = v / (1 - std::pow(b2, static_cast<double>(t)));
    p -= lr * mhat / (std::sqrt(vhat) + eps);
}

}  // namespace oracle
