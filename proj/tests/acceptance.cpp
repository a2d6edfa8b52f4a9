// Acceptance run: one PASS/FAIL line per criterion. Tolerances are fixed here.
//
//   pear_acceptance            run all nine
//   pear_acceptance 3 4 9      run a subset

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <memory>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include <unistd.h>

#include "op_catalog.hpp"
#include "oracles.hpp"
#include "pear/config.hpp"
#include "pear/data.hpp"
#include "pear/hpx_grid.hpp"
#include "pear/metrics.hpp"
#include "pear/model.hpp"
#include "pear/train.hpp"
#include "pear/window_shift.hpp"

using namespace pear;

namespace {

namespace tol {
constexpr double kParamCount = 4.3e6;
constexpr double kParamRel = 0.05;
constexpr double kOpFd64 = 1e-5;
constexpr double kModelFd32 = 1e-3;
constexpr int kModelFdParams = 5;
constexpr double kOverfitRatio = 0.10;
constexpr std::int64_t kOverfitSteps = 2000;
constexpr double kOverfitLr = 5e-4;
constexpr double kOverfitWd = 3e-6;
constexpr int kOverfitSamples = 8;
constexpr double kMetricAbs = 1e-6;
constexpr int kRolloutSteps = 10;
constexpr int kAreaUlps = 8;
constexpr double kAreaRef = 2.6e-4;
constexpr double kAreaRel = 0.02;
}  // namespace tol

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int prec = 3) {
    std::ostringstream os;
    os << std::setprecision(prec) << v;
    return os.str();
}

model::ModelConfig reference_config(std::int64_t n_side) {
    model::ModelConfig c;
    c.n_side = n_side;
    return c;
}

// 1 -------------------------------------------------------------------------
Outcome parameter_count() {
    const auto cfg = reference_config(64);
    const model::PearModel<float> m(cfg);
    const auto n = m.parameter_count();
    const bool agree = n == model::count_parameters(cfg);
    const double rel = std::abs(static_cast<double>(n) - tol::kParamCount) / tol::kParamCount;
    return {agree && rel <= tol::kParamRel,
            std::to_string(n) + " parameters, " + fmt(100 * rel) + "% from 4.3M (limit 5%)" +
                (agree ? "" : ", analytic count disagrees")};
}

// 2 -------------------------------------------------------------------------
Outcome shape_trace() {
    const auto cfg = reference_config(64);
    const model::PearModel<float> m(cfg);
    const std::int64_t n_pix = 12 * 64 * 64, p = n_pix / 16, q = p / 4;
    const model::ShapeTrace expected{
        {"input.surface", {n_pix, 4}},  {"input.upper", {n_pix, 13, 5}}, {"patch_embed", {p, 8, 48}},
        {"encoder_stage", {p, 8, 48}},  {"downsample", {q, 8, 96}},      {"bottleneck", {q, 8, 96}},
        {"upsample", {p, 8, 48}},       {"decoder_stage", {p, 8, 48}},   {"skip_concat", {p, 8, 96}},
        {"output.surface", {n_pix, 4}}, {"output.upper", {n_pix, 13, 5}},
    };
    model::ShapeTrace trace;
    ad::NoGradGuard guard;
    m.forward(ad::Tensor<float>::zeros({n_pix, 4}), ad::Tensor<float>::zeros({n_pix, 13, 5}), &trace);
    if (trace == expected) return {true, std::to_string(trace.size()) + " stages match, latent (3072, 8, 48) / (768, 8, 96)"};
    std::string bad;
    for (std::size_t i = 0; i < std::max(trace.size(), expected.size()); ++i) {
        if (i >= trace.size() || i >= expected.size() || trace[i] != expected[i]) {
            bad = i < expected.size() ? expected[i].first : trace[i].first;
            break;
        }
    }
    return {false, "first mismatch at " + bad};
}

// 3 -------------------------------------------------------------------------
Outcome index_bijection() {
    std::int64_t checked = 0;
    for (std::int64_t n : {1, 2, 4, 8, 16, 64}) {
        const auto spec = hpx::GridSpec::from_nside(n);
        std::vector<char> hit(static_cast<std::size_t>(spec.n_pix), 0);
        for (std::int64_t p = 0; p < spec.n_pix; ++p) {
            const auto r = hpx::nest2ring(spec, p);
            if (r < 0 || r >= spec.n_pix || hit[static_cast<std::size_t>(r)]) return {false, "nest2ring not injective at n_side " + std::to_string(n)};
            hit[static_cast<std::size_t>(r)] = 1;
            if (hpx::ring2nest(spec, r) != p) return {false, "ring2nest(nest2ring(p)) != p at n_side " + std::to_string(n)};
            ++checked;
        }
        const auto census = hpx::ring_census(spec);
        if (static_cast<std::int64_t>(census.size()) != 4 * n - 1) return {false, "ring count wrong at n_side " + std::to_string(n)};
        std::int64_t total = 0;
        for (std::int64_t i = 1; i <= 4 * n - 1; ++i) {
            const std::int64_t expect = i < n ? 4 * i : (i <= 3 * n ? 4 * n : 4 * (4 * n - i));
            if (census[static_cast<std::size_t>(i - 1)] != expect) {
                return {false, "ring " + std::to_string(i) + " holds " + std::to_string(census[static_cast<std::size_t>(i - 1)]) +
                                   " pixels at n_side " + std::to_string(n)};
            }
            total += expect;
        }
        if (total != spec.n_pix) return {false, "census total wrong"};
    }
    return {true, std::to_string(checked) + " pixels round-trip; census matches 4i / 4n / 4(4n-i)"};
}

// 4 -------------------------------------------------------------------------
Outcome mask_oracle() {
    struct Case {
        std::int64_t n_side, depth, w_hp, w_d;
    };
    const Case cases[] = {{1, 8, 1, 2}, {2, 8, 1, 2}, {2, 8, 4, 2}, {4, 8, 4, 2}, {4, 8, 16, 2}, {4, 8, 16, 4}};
    std::int64_t windows = 0, four_region = 0;
    for (const auto& c : cases) {
        const auto spec = hpx::GridSpec::from_nside(c.n_side);
        const auto layout = window::WindowLayout::shifted(spec, c.depth, c.w_hp, c.w_d);
        const auto expected = oracle::provenance_masks(spec, c.depth, c.w_hp, c.w_d, c.w_hp / 2, c.w_d / 2);
        if (expected.size() != layout.masks().size() ||
            std::memcmp(expected.data(), layout.masks().data(), expected.size() * sizeof(float)) != 0) {
            return {false, "mask mismatch at n_side " + std::to_string(c.n_side) + ", window " + std::to_string(c.w_hp)};
        }
        windows += layout.n_windows();
        for (std::int64_t w = 0; w < layout.n_windows(); ++w) four_region += layout.regions_in_window(w) == 4;
    }
    if (four_region == 0) return {false, "no four-region window was exercised"};
    return {true, std::to_string(windows) + " windows bit-identical, " + std::to_string(four_region) + " with four regions"};
}

// 5 -------------------------------------------------------------------------
Outcome gradients() {
    double worst_op = 0.0;
    std::string worst_name;
    for (auto& c : oracle::op_catalog()) {
        const double e = oracle::check_op(c.fn, c.inputs);
        if (!(e <= worst_op)) {
            worst_op = e;
            worst_name = c.name;
        }
    }

    // Float32 model gradient against float64 central differences on the same
    // weights, along a random direction in each of five random parameter tensors.
    const auto cfg = reference_config(8);
    model::PearModel<float> m32(cfg);
    model::PearModel<double> m64(cfg);
    m64.load_records(m32.to_records());
    const std::int64_t n_pix = 768;
    const auto xs = oracle::random_values(n_pix * 4, 1), xu = oracle::random_values(n_pix * 65, 2);
    const auto rs = oracle::random_values(n_pix * 4, 3), ru = oracle::random_values(n_pix * 65, 4);
    auto as32 = [](const std::vector<double>& v) { return std::vector<float>(v.begin(), v.end()); };
    const auto s32 = ad::Tensor<float>::from({n_pix, 4}, as32(xs)), u32 = ad::Tensor<float>::from({n_pix, 13, 5}, as32(xu));
    const auto rs32 = ad::Tensor<float>::from({n_pix, 4}, as32(rs)), ru32 = ad::Tensor<float>::from({n_pix, 13, 5}, as32(ru));
    // Inputs in float64 are the float32-rounded values so both models see identical data.
    std::vector<double> xs64(xs.size()), xu64(xu.size());
    for (std::size_t i = 0; i < xs.size(); ++i) xs64[i] = static_cast<float>(xs[i]);
    for (std::size_t i = 0; i < xu.size(); ++i) xu64[i] = static_cast<float>(xu[i]);
    const auto s64 = ad::Tensor<double>::from({n_pix, 4}, xs64), u64 = ad::Tensor<double>::from({n_pix, 13, 5}, xu64);

    const auto out = m32.forward(s32, u32);
    ad::backward(ad::add(ad::sum(ad::mul(out.surface, rs32)), ad::sum(ad::mul(out.upper, ru32))));
    auto loss64 = [&] {
        ad::NoGradGuard guard;
        const auto o = m64.forward(s64, u64);
        double s = 0.0;
        for (std::size_t i = 0; i < rs.size(); ++i) s += o.surface.data()[i] * static_cast<double>(static_cast<float>(rs[i]));
        for (std::size_t i = 0; i < ru.size(); ++i) s += o.upper.data()[i] * static_cast<double>(static_cast<float>(ru[i]));
        return s;
    };

    const auto named32 = m32.named_parameters();
    const auto named64 = m64.named_parameters();
    std::mt19937_64 rng(5);
    double worst_model = 0.0;
    std::string worst_param;
    std::set<std::size_t> picked;
    while (static_cast<int>(picked.size()) < tol::kModelFdParams) picked.insert(rng() % named32.size());
    for (auto k : picked) {
        const auto& p32 = named32[k].tensor;
        auto t64 = named64[k].tensor;
        auto w = t64.data();
        const auto dir = oracle::random_values(w.size(), rng());
        double analytic = 0.0;
        if (p32.has_grad()) {
            for (std::size_t i = 0; i < w.size(); ++i) analytic += static_cast<double>(p32.grad()[i]) * dir[i];
        }
        const std::vector<double> keep(w.begin(), w.end());
        const double h = 1e-6;
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = keep[i] + h * dir[i];
        const double fp = loss64();
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = keep[i] - h * dir[i];
        const double fm = loss64();
        std::copy(keep.begin(), keep.end(), w.begin());
        const double numeric = (fp - fm) / (2 * h);
        const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-12});
        if (!(rel <= worst_model)) {
            worst_model = rel;
            worst_param = named32[k].name;
        }
    }
    const bool pass = worst_op < tol::kOpFd64 && worst_model < tol::kModelFd32;
    return {pass, "worst op " + worst_name + " " + fmt(worst_op) + " (limit 1e-5, float64); worst model parameter " +
                      worst_param + " " + fmt(worst_model) + " (limit 1e-3, float32)"};
}

// 6 -------------------------------------------------------------------------
std::unique_ptr<train::Trainer<float>> g_trained;
data::NormStats g_trained_stats;

Outcome desk_learning() {
    config::RunConfig rc;
    rc.seed = 2024;
    rc.model = reference_config(8);
    rc.train.lr = tol::kOverfitLr;
    rc.train.weight_decay = tol::kOverfitWd;
    rc.train.steps = tol::kOverfitSteps;
    rc.train.checkpoint_every = 0;
    rc.train.n_val = 0;
    rc.data.n_steps = tol::kOverfitSamples + 1;
    rc.propagate_seed();

    const auto raw = data::gen_synthetic(rc.synthetic());
    g_trained_stats = data::NormStats::compute(raw);
    std::vector<data::VolumetricState> norm;
    for (const auto& s : raw) norm.push_back(g_trained_stats.normalize(s));
    const double persistence = data::persistence_l1(norm, rc.train.surface_loss_weight);

    g_trained = std::make_unique<train::Trainer<float>>(rc, norm);
    auto& t = *g_trained;
    const double initial = t.mean_train_loss();
    const auto dir = std::filesystem::temp_directory_path() / ("pear_acceptance_" + std::to_string(::getpid()));
    std::int64_t reached = -1;
    std::ostringstream curve;
    for (std::int64_t stop = 250; stop <= tol::kOverfitSteps; stop += 250) {
        const auto log = t.run(dir, stop);
        if (log.aborted) {
            std::filesystem::remove_all(dir);
            return {false, "training aborted: " + log.abort_reason};
        }
        const double l = t.mean_train_loss();
        curve << " " << stop << ":" << fmt(l / initial, 2);
        if (reached < 0 && l < tol::kOverfitRatio * initial) reached = stop;
    }
    std::filesystem::remove_all(dir);
    const double final_loss = t.mean_train_loss();
    const bool pass = final_loss < tol::kOverfitRatio * initial && final_loss < persistence;
    return {pass, "L1 " + fmt(initial, 4) + " -> " + fmt(final_loss, 4) + " (" + fmt(100 * final_loss / initial) +
                      "% of initial, limit 10%), persistence " + fmt(persistence, 4) +
                      (reached > 0 ? ", below 10% by step " + std::to_string(reached) : "") + "; loss ratio by step:" + curve.str()};
}

// 7 -------------------------------------------------------------------------
Outcome metric_identities() {
    const std::size_t n = 768;
    const auto to_f = [](std::vector<double> v) { return std::vector<float>(v.begin(), v.end()); };
    const auto y = to_f(oracle::random_values(n, 11)), clim = to_f(oracle::random_values(n, 12)), other = to_f(oracle::random_values(n, 13));
    std::vector<float> neg(n), scaled(n), shifted(n);
    for (std::size_t i = 0; i < n; ++i) {
        neg[i] = 2 * clim[i] - other[i];
        scaled[i] = clim[i] + 2.5f * (other[i] - clim[i]);
        shifted[i] = y[i] + 0.5f;
    }
    double worst = 0.0;
    auto track = [&](double got, double want) { worst = std::max(worst, std::abs(got - want)); };
    track(*metrics::acc(y, y, clim), 1.0);
    const double r = *metrics::acc(y, other, clim);
    track(*metrics::acc(y, neg, clim), -r);
    track(*metrics::acc(y, scaled, clim), r);
    track(metrics::rmse(y, shifted), 0.5);
    track(metrics::rmse(y, y), 0.0);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(14);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<float> py(n), po(n), pc(n);
    for (std::size_t i = 0; i < n; ++i) {
        py[i] = y[perm[i]];
        po[i] = other[perm[i]];
        pc[i] = clim[perm[i]];
    }
    track(metrics::rmse(py, po), metrics::rmse(y, other));
    track(*metrics::acc(py, po, pc), r);
    const bool missing = !metrics::acc(y, other, y).has_value();
    return {worst < tol::kMetricAbs && missing,
            "largest deviation " + fmt(worst) + " (limit 1e-6); zero-anomaly ACC reported missing: " + (missing ? "yes" : "no")};
}

// 8 -------------------------------------------------------------------------
Outcome rollout_mechanics() {
    config::RunConfig rc;
    rc.seed = 99;
    rc.model = reference_config(8);
    rc.data.n_steps = tol::kRolloutSteps + 2;
    rc.propagate_seed();
    const auto seq = data::gen_synthetic(rc.synthetic());
    const auto stats = data::NormStats::compute(seq);
    const auto clim = metrics::ClimatologyTable::build(seq);
    const std::vector<std::int64_t> init{0};

    auto run_once = [&](std::int64_t& calls) {
        const model::PearModel<float> m(rc.model);
        return train::rollout<float>(m, stats, seq, init, tol::kRolloutSteps, clim, [&] { ++calls; });
    };
    std::int64_t calls_a = 0, calls_b = 0;
    const auto a = run_once(calls_a);
    const auto b = run_once(calls_b);
    std::set<int> leads;
    for (const auto& r : a.rows) leads.insert(r.lead_time_days);
    bool contiguous = static_cast<int>(leads.size()) == tol::kRolloutSteps && *leads.begin() == 1 && *leads.rbegin() == tol::kRolloutSteps;
    bool identical = a.rows.size() == b.rows.size();
    for (std::size_t i = 0; identical && i < a.rows.size(); ++i) {
        identical = std::memcmp(&a.rows[i].rmse, &b.rows[i].rmse, sizeof(double)) == 0 &&
                    a.rows[i].acc.has_value() == b.rows[i].acc.has_value() &&
                    (!a.rows[i].acc || std::memcmp(&*a.rows[i].acc, &*b.rows[i].acc, sizeof(double)) == 0);
    }
    const bool pass = calls_a == tol::kRolloutSteps && a.forward_count == tol::kRolloutSteps && contiguous && identical && !a.unstable;
    std::string detail = std::to_string(calls_a) + " forwards, leads " + std::to_string(*leads.begin()) + ".." +
                         std::to_string(*leads.rbegin()) + (contiguous ? " contiguous" : " NOT contiguous") + ", " +
                         std::to_string(a.rows.size()) + " rows, repeat run " + (identical ? "bit-identical" : "DIFFERS");

    // Degradation tendency of the overfit model from criterion 6 (reported only).
    if (g_trained) {
        rc.seed = 2024;
        rc.data.n_steps = 11;
        rc.propagate_seed();
        const auto own = data::gen_synthetic(rc.synthetic());
        // Climatology from three other seeds, standing in for other years.
        std::vector<data::VolumetricState> years;
        for (std::uint64_t y = 1; y <= 3; ++y) {
            auto sc = rc.synthetic();
            sc.seed = 2024 + y;
            const auto ys = data::gen_synthetic(sc);
            years.insert(years.end(), ys.begin(), ys.end());
        }
        const auto own_clim = metrics::ClimatologyTable::build(years);
        const auto rep = train::rollout<float>(g_trained->model(), g_trained_stats, own, init, 10, own_clim);
        int total = 0, monotone = 0;
        for (const auto& r1 : rep.rows) {
            if (r1.lead_time_days != 1 || !r1.acc) continue;
            for (const auto& r10 : rep.rows) {
                if (r10.lead_time_days == 10 && r10.variable == r1.variable && r10.level == r1.level && r10.acc) {
                    ++total;
                    monotone += *r1.acc >= *r10.acc;
                }
            }
        }
        if (total > 0) {
            detail += "; trained model ACC(lead 1) >= ACC(lead 10) for " + std::to_string(monotone) + "/" + std::to_string(total) + " rows";
        }
    }
    return {pass, detail};
}

// 9 -------------------------------------------------------------------------
Outcome equal_area() {
    const double four_pi = 4.0 * std::numbers::pi;
    const double ulp = std::nextafter(four_pi, 8.0) - four_pi;
    double worst_ulps = 0.0;
    for (std::int64_t n = 1; n <= 8192; n *= 2) {
        const auto spec = hpx::GridSpec::from_nside(n);
        worst_ulps = std::max(worst_ulps, std::abs(spec.pixel_area * static_cast<double>(spec.n_pix) - four_pi) / ulp);
    }
    const double a64 = hpx::GridSpec::from_nside(64).pixel_area;
    const double rel = std::abs(a64 - tol::kAreaRef) / tol::kAreaRef;
    return {worst_ulps <= tol::kAreaUlps && rel <= tol::kAreaRel,
            "area * n_pix within " + fmt(worst_ulps) + " ulp of 4 pi (limit 8, n_side 1..8192); n_side 64 area " + fmt(a64, 5) +
                " sr, " + fmt(100 * rel) + "% from 2.6e-4 (limit 2%)"};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"parameter count", parameter_count},   {"shape trace", shape_trace},
        {"index bijection", index_bijection},   {"mask oracle equivalence", mask_oracle},
        {"gradient correctness", gradients},    {"desk-scale learning", desk_learning},
        {"metric identities", metric_identities}, {"rollout mechanics", rollout_mechanics},
        {"equal-area geometry", equal_area},
    };
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!wanted.empty() && !wanted.count(id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failed += o.pass ? 0 : 1;
        std::cout << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << criteria[i].first << " (" << fmt(secs, 3) << " s): " << o.detail
                  << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
