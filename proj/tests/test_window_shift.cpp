#include <doctest.h>

#include <cstring>
#include <numeric>

#include "oracles.hpp"
#include "pear/errors.hpp"
#include "pear/window_shift.hpp"

using namespace pear;
using window::WindowLayout;
using window::WindowSpec;

namespace {

std::vector<float> iota_field(std::int64_t n) {
    std::vector<float> v(static_cast<std::size_t>(n));
    std::iota(v.begin(), v.end(), 0.0f);
    return v;
}

}  // namespace

TEST_SUITE("window_shift") {

TEST_CASE("masks match the provenance oracle bit for bit") {
    struct Case {
        std::int64_t n_side, depth, w_hp, w_d, s_hp, s_d;
    };
    const Case cases[] = {
        {1, 8, 1, 2, 0, 1},  {2, 8, 4, 2, 2, 1},  {2, 4, 1, 2, 0, 1},  {4, 8, 16, 2, 8, 1},
        {4, 8, 4, 2, 2, 1},  {4, 8, 16, 4, 8, 2}, {4, 6, 16, 3, 8, 1}, {4, 8, 16, 2, 8, 0},
        {4, 8, 16, 2, 0, 1}, {2, 8, 4, 2, 3, 1},  {4, 8, 16, 2, 13, 1},
    };
    for (const auto& c : cases) {
        CAPTURE(c.n_side);
        CAPTURE(c.w_hp);
        CAPTURE(c.s_hp);
        CAPTURE(c.s_d);
        const auto spec = hpx::GridSpec::from_nside(c.n_side);
        const WindowLayout layout(spec, c.depth, {c.w_hp, c.w_d, c.s_hp, c.s_d});
        const auto expected = oracle::provenance_masks(spec, c.depth, c.w_hp, c.w_d, c.s_hp, c.s_d);
        REQUIRE(expected.size() == layout.masks().size());
        CHECK(std::memcmp(expected.data(), layout.masks().data(), expected.size() * sizeof(float)) == 0);
    }
}

TEST_CASE("shifted layouts at n_side 4 contain four-region windows") {
    const auto layout = WindowLayout::shifted(hpx::GridSpec::from_nside(4), 8, 16, 2);
    int four = 0, one = 0;
    for (std::int64_t w = 0; w < layout.n_windows(); ++w) {
        const int r = layout.regions_in_window(w);
        four += r == 4;
        one += r == 1;
    }
    CHECK(four > 0);
    CHECK(one > 0);
    CHECK(layout.has_mask());
}

TEST_CASE("unshifted layouts need no mask") {
    const auto layout = WindowLayout::unshifted(hpx::GridSpec::from_nside(4), 8, 16, 2);
    CHECK_FALSE(layout.has_mask());
    for (float m : layout.masks()) CHECK(m == 0.0f);
}

TEST_CASE("partition and merge are inverse permutations") {
    const auto spec = hpx::GridSpec::from_nside(4);
    const auto layout = WindowLayout::shifted(spec, 8, 16, 2);
    const std::int64_t channels = 3;
    const auto x = iota_field(layout.n_voxels() * channels);
    const auto windows = window::partition<float>(x, layout, channels);
    CHECK(window::merge<float>(windows, layout, channels) == x);
    const auto shifted = window::shift<float>(x, layout, channels);
    CHECK(window::unshift<float>(shifted, layout, channels) == x);
    // The composed gathers agree with shift-then-partition.
    CHECK(window::gather_rows<float>(x, layout.shift_partition_index(), channels) ==
          window::partition<float>(shifted, layout, channels));
    CHECK(window::gather_rows<float>(window::partition<float>(shifted, layout, channels), layout.merge_unshift_index(),
                                     channels) == x);
}

TEST_CASE("a window holds one nested pixel block over consecutive levels") {
    const auto spec = hpx::GridSpec::from_nside(4);
    const auto layout = WindowLayout::unshifted(spec, 8, 16, 2);
    const auto part = layout.partition_index();
    for (std::int64_t w = 0; w < layout.n_windows(); ++w) {
        for (std::int64_t j = 0; j < layout.window_voxels(); ++j) {
            const auto v = part[static_cast<std::size_t>(w * layout.window_voxels() + j)];
            const auto p = v / 8, l = v % 8;
            CHECK(p / 16 == w / 4);
            CHECK(l / 2 == w % 4);
        }
    }
}

TEST_CASE("a horizontal-only shift is a negative roll along the ring order") {
    const auto spec = hpx::GridSpec::from_nside(4);
    const WindowLayout layout(spec, 4, {16, 2, 8, 0});
    const auto x = iota_field(layout.n_voxels());
    CHECK(window::shift<float>(x, layout, 1) == window::roll_ring<float>(x, spec, 4, 1, -8));
}

TEST_CASE("the vertical shift rolls levels upward") {
    const auto spec = hpx::GridSpec::from_nside(2);
    const WindowLayout layout(spec, 8, {4, 2, 0, 1});
    const auto x = iota_field(layout.n_voxels());
    const auto y = window::shift<float>(x, layout, 1);
    for (std::int64_t p = 0; p < spec.n_pix; ++p) {
        for (std::int64_t l = 0; l < 8; ++l) CHECK(y[static_cast<std::size_t>(p * 8 + l)] == x[static_cast<std::size_t>(p * 8 + (l + 1) % 8)]);
    }
}

TEST_CASE("ring rolls compose and a full turn is the identity") {
    const auto spec = hpx::GridSpec::from_nside(4);
    const auto x = iota_field(spec.n_pix * 2);
    const auto a = window::roll_ring<float>(x, spec, 2, 1, 5);
    const auto ab = window::roll_ring<float>(a, spec, 2, 1, 7);
    CHECK(ab == window::roll_ring<float>(x, spec, 2, 1, 12));
    CHECK(window::roll_ring<float>(x, spec, 2, 1, spec.n_pix) == x);
}

TEST_CASE("masked pairs are exactly the pairs from different regions") {
    const auto layout = WindowLayout::shifted(hpx::GridSpec::from_nside(4), 8, 16, 2);
    const auto ids = layout.region_ids();
    const auto wv = layout.window_voxels();
    for (std::int64_t w = 0; w < layout.n_windows(); ++w) {
        const auto m = layout.window_mask(w);
        for (std::int64_t i = 0; i < wv; ++i) {
            for (std::int64_t j = 0; j < wv; ++j) {
                const bool same = ids[static_cast<std::size_t>(w * wv + i)] == ids[static_cast<std::size_t>(w * wv + j)];
                CHECK((m[static_cast<std::size_t>(i * wv + j)] == 0.0f) == same);
            }
        }
    }
    // Vertically wrapped rows only occur in the top level block.
    for (std::int64_t row = 0; row < layout.n_voxels(); ++row) {
        if (ids[static_cast<std::size_t>(row)] & 2) CHECK((row / wv) % 4 == 3);
    }
}

TEST_CASE("invalid window configurations are rejected") {
    const auto spec = hpx::GridSpec::from_nside(4);
    CHECK_THROWS_AS(WindowLayout(spec, 8, {8, 2, 0, 0}), ConfigError);
    CHECK_THROWS_AS(WindowLayout(spec, 8, {64, 2, 0, 0}), ConfigError);
    CHECK_THROWS_AS(WindowLayout(spec, 8, {16, 3, 0, 0}), ConfigError);
    CHECK_THROWS_AS(WindowLayout(spec, 8, {16, 2, spec.n_pix, 0}), ConfigError);
    CHECK_THROWS_AS(WindowLayout(spec, 8, {16, 2, 0, 8}), ConfigError);
    const auto layout = WindowLayout::unshifted(spec, 8, 16, 2);
    CHECK_THROWS_AS(layout.window_mask(layout.n_windows()), RangeError);
    std::vector<float> wrong(7);
    CHECK_THROWS_AS(window::partition<float>(wrong, layout, 1), DimensionError);
}

}  // TEST_SUITE
