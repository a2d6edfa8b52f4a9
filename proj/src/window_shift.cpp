#include "pear/window_shift.hpp"

#include <array>
#include <string>

namespace pear::window {
namespace {

bool is_power_of_four(std::int64_t v) {
    if (v <= 0 || (v & (v - 1)) != 0) return false;
    int bit = 0;
    while ((std::int64_t{1} << bit) != v) ++bit;
    return bit % 2 == 0;
}

std::int64_t mod(std::int64_t a, std::int64_t m) { return ((a % m) + m) % m; }

}  // namespace

std::vector<std::int64_t> roll_ring_index(const hpx::GridSpec& spec, std::int64_t depth, std::int64_t shift) {
    const auto n2r = hpx::nest2ring_table(spec);
    const auto r2n = hpx::ring2nest_table(spec);
    const std::int64_t n_pix = spec.n_pix;
    std::vector<std::int64_t> index(static_cast<std::size_t>(n_pix * depth));
    for (std::int64_t p = 0; p < n_pix; ++p) {
        const std::int64_t src_ring = mod(n2r[static_cast<std::size_t>(p)] - shift, n_pix);
        const std::int64_t src = r2n[static_cast<std::size_t>(src_ring)];
        for (std::int64_t l = 0; l < depth; ++l) {
            index[static_cast<std::size_t>(p * depth + l)] = src * depth + l;
        }
    }
    return index;
}

WindowLayout::WindowLayout(hpx::GridSpec patch_spec, std::int64_t depth, WindowSpec spec)
    : patch_spec_(patch_spec), depth_(depth), spec_(spec) {
    const std::int64_t n_pix = patch_spec_.n_pix;
    if (!is_power_of_four(spec_.window_hp)) {
        throw ConfigError("window_hp must be a power of 4, got " + std::to_string(spec_.window_hp));
    }
    if (spec_.window_hp > patch_spec_.face_pixels()) {
        throw ConfigError("window_hp " + std::to_string(spec_.window_hp) + " exceeds the " +
                          std::to_string(patch_spec_.face_pixels()) + " pixels of one base face");
    }
    if (depth_ <= 0 || spec_.window_d <= 0 || depth_ % spec_.window_d != 0) {
        throw ConfigError("window_d must divide the vertical extent");
    }
    if (spec_.shift_hp < 0 || spec_.shift_hp >= n_pix || spec_.shift_d < 0 || spec_.shift_d >= depth_) {
        throw ConfigError("shift amounts out of range");
    }

    const std::int64_t n_voxels = n_pix * depth_;
    const std::int64_t w_hp = spec_.window_hp;
    const std::int64_t w_d = spec_.window_d;
    const std::int64_t vblocks = depth_ / w_d;
    const std::int64_t wvox = w_hp * w_d;
    n_windows_ = (n_pix / w_hp) * vblocks;

    // Negative shift: the value at ring position r, level l lands at
    // (r - shift_hp, l - shift_d), so shifted(r', l') reads (r' + shift_hp, l' + shift_d).
    const auto n2r = hpx::nest2ring_table(patch_spec_);
    const auto r2n = hpx::ring2nest_table(patch_spec_);
    perm_forward_.resize(static_cast<std::size_t>(n_voxels));
    perm_inverse_.resize(static_cast<std::size_t>(n_voxels));
    std::vector<std::uint8_t> voxel_region(static_cast<std::size_t>(n_voxels));
    for (std::int64_t p = 0; p < n_pix; ++p) {
        const std::int64_t ring = n2r[static_cast<std::size_t>(p)];
        const std::int64_t src_p = r2n[static_cast<std::size_t>(mod(ring + spec_.shift_hp, n_pix))];
        const bool pole_wrapped = ring >= n_pix - spec_.shift_hp;
        for (std::int64_t l = 0; l < depth_; ++l) {
            const std::int64_t src_l = mod(l + spec_.shift_d, depth_);
            const bool vert_wrapped = l >= depth_ - spec_.shift_d;
            const std::int64_t v = p * depth_ + l;
            const std::int64_t src = src_p * depth_ + src_l;
            perm_forward_[static_cast<std::size_t>(v)] = src;
            perm_inverse_[static_cast<std::size_t>(src)] = v;
            voxel_region[static_cast<std::size_t>(v)] =
                static_cast<std::uint8_t>((pole_wrapped ? 1 : 0) | (vert_wrapped ? 2 : 0));
        }
    }

    // Window w = (pixel block, vertical block); row j = (pixel in block, level in block).
    partition_.resize(static_cast<std::size_t>(n_voxels));
    merge_.resize(static_cast<std::size_t>(n_voxels));
    for (std::int64_t p = 0; p < n_pix; ++p) {
        for (std::int64_t l = 0; l < depth_; ++l) {
            const std::int64_t w = (p / w_hp) * vblocks + l / w_d;
            const std::int64_t j = (p % w_hp) * w_d + l % w_d;
            const std::int64_t row = w * wvox + j;
            const std::int64_t v = p * depth_ + l;
            partition_[static_cast<std::size_t>(row)] = v;
            merge_[static_cast<std::size_t>(v)] = row;
        }
    }

    shift_partition_.resize(static_cast<std::size_t>(n_voxels));
    merge_unshift_.resize(static_cast<std::size_t>(n_voxels));
    region_.resize(static_cast<std::size_t>(n_voxels));
    for (std::int64_t row = 0; row < n_voxels; ++row) {
        const std::int64_t shifted_voxel = partition_[static_cast<std::size_t>(row)];
        const std::int64_t src = perm_forward_[static_cast<std::size_t>(shifted_voxel)];
        shift_partition_[static_cast<std::size_t>(row)] = src;
        merge_unshift_[static_cast<std::size_t>(src)] = row;
        region_[static_cast<std::size_t>(row)] = voxel_region[static_cast<std::size_t>(shifted_voxel)];
    }

    masks_.assign(static_cast<std::size_t>(n_windows_ * wvox * wvox), 0.0f);
    for (std::int64_t w = 0; w < n_windows_; ++w) {
        const std::uint8_t* ids = region_.data() + w * wvox;
        float* m = masks_.data() + w * wvox * wvox;
        for (std::int64_t i = 0; i < wvox; ++i) {
            for (std::int64_t j = 0; j < wvox; ++j) {
                if (ids[i] != ids[j]) {
                    m[i * wvox + j] = -kMaskLarge;
                    has_mask_ = true;
                }
            }
        }
    }
}

WindowLayout WindowLayout::shifted(hpx::GridSpec patch_spec, std::int64_t depth, std::int64_t window_hp,
                                   std::int64_t window_d) {
    return WindowLayout(patch_spec, depth, {window_hp, window_d, window_hp / 2, window_d / 2});
}

WindowLayout WindowLayout::unshifted(hpx::GridSpec patch_spec, std::int64_t depth, std::int64_t window_hp,
                                     std::int64_t window_d) {
    return WindowLayout(patch_spec, depth, {window_hp, window_d, 0, 0});
}

std::span<const float> WindowLayout::window_mask(std::int64_t w) const {
    if (w < 0 || w >= n_windows_) throw RangeError("window index out of range");
    const std::int64_t block = window_voxels() * window_voxels();
    return std::span<const float>(masks_).subspan(static_cast<std::size_t>(w * block),
                                                   static_cast<std::size_t>(block));
}

int WindowLayout::regions_in_window(std::int64_t w) const {
    if (w < 0 || w >= n_windows_) throw RangeError("window index out of range");
    std::array<bool, 4> seen{};
    const std::int64_t wvox = window_voxels();
    for (std::int64_t j = 0; j < wvox; ++j) seen[region_[static_cast<std::size_t>(w * wvox + j)]] = true;
    int count = 0;
    for (bool s : seen) count += s ? 1 : 0;
    return count;
}

}  // namespace pear::window
