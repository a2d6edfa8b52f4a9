#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "pear/data.hpp"
#include "pear/errors.hpp"

namespace pear::data {

VolumetricState VolumetricState::zeros(std::int64_t n_side) {
    VolumetricState s;
    s.n_side = n_side;
    const auto n_pix = 12 * n_side * n_side;
    s.surface.assign(static_cast<std::size_t>(n_pix * kSurfaceChannels), 0.0f);
    s.upper.assign(static_cast<std::size_t>(n_pix * kUpperLevels * kUpperChannels), 0.0f);
    return s;
}

bool VolumetricState::all_finite() const {
    auto finite = [](float v) { return std::isfinite(v); };
    return std::all_of(surface.begin(), surface.end(), finite) && std::all_of(upper.begin(), upper.end(), finite);
}

NormStats NormStats::identity() {
    NormStats s;
    s.surface_std.fill(1.0);
    s.upper_std.fill(1.0);
    return s;
}

NormStats NormStats::compute(std::span<const VolumetricState> states) {
    if (states.empty()) throw ContractError("normalization statistics need at least one state");
    NormStats st;
    std::array<double, kSurfaceChannels> ns{}, ss{};
    std::array<double, kUpperChannels> nu{}, su{};
    for (const auto& s : states) {
        for (std::size_t i = 0; i < s.surface.size(); ++i) {
            st.surface_mean[i % kSurfaceChannels] += s.surface[i];
            ns[i % kSurfaceChannels] += 1.0;
        }
        for (std::size_t i = 0; i < s.upper.size(); ++i) {
            st.upper_mean[i % kUpperChannels] += s.upper[i];
            nu[i % kUpperChannels] += 1.0;
        }
    }
    for (std::size_t c = 0; c < kSurfaceChannels; ++c) st.surface_mean[c] /= ns[c];
    for (std::size_t c = 0; c < kUpperChannels; ++c) st.upper_mean[c] /= nu[c];
    for (const auto& s : states) {
        for (std::size_t i = 0; i < s.surface.size(); ++i) {
            const double d = s.surface[i] - st.surface_mean[i % kSurfaceChannels];
            ss[i % kSurfaceChannels] += d * d;
        }
        for (std::size_t i = 0; i < s.upper.size(); ++i) {
            const double d = s.upper[i] - st.upper_mean[i % kUpperChannels];
            su[i % kUpperChannels] += d * d;
        }
    }
    for (std::size_t c = 0; c < kSurfaceChannels; ++c) st.surface_std[c] = std::max(std::sqrt(ss[c] / ns[c]), 1e-12);
    for (std::size_t c = 0; c < kUpperChannels; ++c) st.upper_std[c] = std::max(std::sqrt(su[c] / nu[c]), 1e-12);
    return st;
}

VolumetricState NormStats::normalize(const VolumetricState& s) const {
    VolumetricState out = s;
    for (std::size_t i = 0; i < out.surface.size(); ++i) {
        const auto c = i % kSurfaceChannels;
        out.surface[i] = static_cast<float>((s.surface[i] - surface_mean[c]) / surface_std[c]);
    }
    for (std::size_t i = 0; i < out.upper.size(); ++i) {
        const auto c = i % kUpperChannels;
        out.upper[i] = static_cast<float>((s.upper[i] - upper_mean[c]) / upper_std[c]);
    }
    return out;
}

VolumetricState NormStats::denormalize(const VolumetricState& s) const {
    VolumetricState out = s;
    for (std::size_t i = 0; i < out.surface.size(); ++i) {
        const auto c = i % kSurfaceChannels;
        out.surface[i] = static_cast<float>(s.surface[i] * surface_std[c] + surface_mean[c]);
    }
    for (std::size_t i = 0; i < out.upper.size(); ++i) {
        const auto c = i % kUpperChannels;
        out.upper[i] = static_cast<float>(s.upper[i] * upper_std[c] + upper_mean[c]);
    }
    return out;
}

namespace {

struct Monomial {
    int a, b, c;
};

std::vector<Monomial> monomials(int max_degree) {
    std::vector<Monomial> out;
    for (int d = 0; d <= max_degree; ++d) {
        for (int a = d; a >= 0; --a) {
            for (int b = d - a; b >= 0; --b) out.push_back({a, b, d - a - b});
        }
    }
    return out;
}

// Base value and amplitude of each variable; level 0 is the lowest (highest-pressure) level.
struct Climate {
    double base, amp;
};

Climate surface_climate(std::int64_t c) {
    static constexpr Climate table[] = {{0.0, 5.0}, {0.0, 5.0}, {280.0, 15.0}, {101325.0, 1000.0}};
    return table[c];
}

Climate upper_climate(std::int64_t c, std::int64_t level) {
    const auto l = static_cast<double>(level);
    switch (c) {
        case 0: {
            const double q = 0.01 * std::exp(-l / 3.0);
            return {q, 0.4 * q};
        }
        case 1: return {std::max(288.0 - 5.5 * l, 215.0), 10.0};
        case 2: return {5.0 + 2.0 * l, 10.0};
        case 3: return {0.0, 6.0};
        default: return {100.0 + 1500.0 * l, 50.0 + 20.0 * l};
    }
}

}  // namespace

std::vector<VolumetricState> gen_synthetic(const SyntheticConfig& cfg) {
    if (cfg.n_steps < 2) throw ConfigError("synthetic sequences need at least 2 states");
    if (cfg.max_degree < 0) throw ConfigError("max_degree must be non-negative");
    if (cfg.noise < 0.0) throw ConfigError("noise must be non-negative");
    const auto spec = hpx::GridSpec::from_nside(cfg.n_side);
    const auto basis = monomials(cfg.max_degree);
    const auto nb = basis.size();

    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto draw = [&] {
        std::vector<double> w(nb);
        for (auto& x : w) x = normal(rng);
        return w;
    };
    // Surface fields get one pattern each; every upper variable blends two
    // patterns smoothly across levels.
    std::vector<std::vector<double>> surface_coef(kSurfaceChannels);
    for (auto& w : surface_coef) w = draw();
    std::vector<std::vector<double>> upper_lo(kUpperChannels), upper_hi(kUpperChannels);
    for (std::int64_t c = 0; c < kUpperChannels; ++c) {
        upper_lo[static_cast<std::size_t>(c)] = draw();
        upper_hi[static_cast<std::size_t>(c)] = draw();
    }

    const auto n_pix = spec.n_pix;
    std::vector<hpx::Vec3> centers(static_cast<std::size_t>(n_pix));
    for (std::int64_t p = 0; p < n_pix; ++p) centers[static_cast<std::size_t>(p)] = hpx::pixel_vector(spec, {hpx::Scheme::nested, p});

    auto evaluate = [&](double angle, std::vector<std::vector<double>>& phi) {
        // phi[p][m] = monomial m at the pixel center rotated back by `angle`.
        const double ca = std::cos(angle), sa = std::sin(angle);
        phi.assign(static_cast<std::size_t>(n_pix), std::vector<double>(nb));
        for (std::int64_t p = 0; p < n_pix; ++p) {
            const auto& r = centers[static_cast<std::size_t>(p)];
            const double x = ca * r[0] + sa * r[1];
            const double y = -sa * r[0] + ca * r[1];
            const double z = r[2];
            for (std::size_t m = 0; m < nb; ++m) {
                phi[static_cast<std::size_t>(p)][m] =
                    std::pow(x, basis[m].a) * std::pow(y, basis[m].b) * std::pow(z, basis[m].c);
            }
        }
    };
    auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
        return s;
    };

    // Unit RMS over the grid at t = 0.
    std::vector<std::vector<double>> phi;
    evaluate(0.0, phi);
    auto rms = [&](const std::vector<double>& w) {
        double s = 0.0;
        for (const auto& row : phi) s += dot(row, w) * dot(row, w);
        return std::max(std::sqrt(s / static_cast<double>(n_pix)), 1e-12);
    };
    for (auto& w : surface_coef) {
        const double r = rms(w);
        for (auto& x : w) x /= r;
    }
    for (std::int64_t c = 0; c < kUpperChannels; ++c) {
        for (auto* set : {&upper_lo, &upper_hi}) {
            auto& w = (*set)[static_cast<std::size_t>(c)];
            const double r = rms(w);
            for (auto& x : w) x /= r;
        }
    }

    std::vector<VolumetricState> seq;
    seq.reserve(static_cast<std::size_t>(cfg.n_steps));
    for (std::int64_t t = 0; t < cfg.n_steps; ++t) {
        evaluate(cfg.angular_velocity * static_cast<double>(t), phi);
        auto s = VolumetricState::zeros(cfg.n_side);
        s.day_of_year = static_cast<int>((cfg.start_day_of_year - 1 + t) % 365) + 1;
        for (std::int64_t p = 0; p < n_pix; ++p) {
            const auto& row = phi[static_cast<std::size_t>(p)];
            for (std::int64_t c = 0; c < kSurfaceChannels; ++c) {
                const auto cl = surface_climate(c);
                const double value = cl.base + cl.amp * dot(row, surface_coef[static_cast<std::size_t>(c)]);
                const double noise = cfg.noise > 0.0 ? cfg.noise * cl.amp * normal(rng) : 0.0;
                s.surface[static_cast<std::size_t>(p * kSurfaceChannels + c)] = static_cast<float>(value + noise);
            }
            for (std::int64_t c = 0; c < kUpperChannels; ++c) {
                const double lo = dot(row, upper_lo[static_cast<std::size_t>(c)]);
                const double hi = dot(row, upper_hi[static_cast<std::size_t>(c)]);
                for (std::int64_t l = 0; l < kUpperLevels; ++l) {
                    const double a = 0.5 * std::numbers::pi * static_cast<double>(l) / static_cast<double>(kUpperLevels - 1);
                    const auto cl = upper_climate(c, l);
                    const double value = cl.base + cl.amp * (std::cos(a) * lo + std::sin(a) * hi);
                    const double noise = cfg.noise > 0.0 ? cfg.noise * cl.amp * normal(rng) : 0.0;
                    s.upper[static_cast<std::size_t>((p * kUpperLevels + l) * kUpperChannels + c)] =
                        static_cast<float>(value + noise);
                }
            }
        }
        seq.push_back(std::move(s));
    }
    return seq;
}

double persistence_l1(std::span<const VolumetricState> states, double surface_weight) {
    if (states.size() < 2) throw ContractError("persistence needs at least two states");
    double total = 0.0;
    for (std::size_t t = 0; t + 1 < states.size(); ++t) {
        const auto& a = states[t];
        const auto& b = states[t + 1];
        if (a.surface.size() != b.surface.size() || a.upper.size() != b.upper.size()) {
            throw DimensionError("persistence over states of different shapes");
        }
        double es = 0.0, eu = 0.0;
        for (std::size_t i = 0; i < a.surface.size(); ++i) es += std::abs(double(b.surface[i]) - a.surface[i]);
        for (std::size_t i = 0; i < a.upper.size(); ++i) eu += std::abs(double(b.upper[i]) - a.upper[i]);
        total += surface_weight * es / static_cast<double>(a.surface.size()) + eu / static_cast<double>(a.upper.size());
    }
    return total / static_cast<double>(states.size() - 1);
}

}  // namespace pear::data
