#pragma once

// Window partitioning and cyclic shifting of voxel tensors laid out as
// (P, D, C): P patch-grid pixels in nested order, D vertical slots, C
// channels, row-major. Voxel v = p * D + l.

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pear/errors.hpp"
#include "pear/hpx_grid.hpp"

namespace pear::window {

/// Finite stand-in for -infinity in attention masks.
inline constexpr float kMaskLarge = 1.0e9f;

struct WindowSpec {
    std::int64_t window_hp = 64;  // pixels per window, a power of 4
    std::int64_t window_d = 2;    // vertical slots per window
    std::int64_t shift_hp = 0;    // ring-order shift (applied negatively)
    std::int64_t shift_d = 0;     // vertical shift (applied negatively)
};

/// Precomputed permutations and masks for one (grid, depth, window, shift)
/// combination. Immutable after construction.
class WindowLayout {
public:
    WindowLayout(hpx::GridSpec patch_spec, std::int64_t depth, WindowSpec spec);

    /// Layout whose shift is half a window in both directions.
    static WindowLayout shifted(hpx::GridSpec patch_spec, std::int64_t depth, std::int64_t window_hp,
                                std::int64_t window_d);
    static WindowLayout unshifted(hpx::GridSpec patch_spec, std::int64_t depth, std::int64_t window_hp,
                                  std::int64_t window_d);

    const hpx::GridSpec& patch_spec() const { return patch_spec_; }
    const WindowSpec& spec() const { return spec_; }
    std::int64_t n_pixels() const { return patch_spec_.n_pix; }
    std::int64_t depth() const { return depth_; }
    std::int64_t n_voxels() const { return patch_spec_.n_pix * depth_; }
    std::int64_t n_windows() const { return n_windows_; }
    std::int64_t window_voxels() const { return spec_.window_hp * spec_.window_d; }
    bool is_shifted() const { return spec_.shift_hp != 0 || spec_.shift_d != 0; }

    /// shifted[v] = x[perm_forward[v]]
    std::span<const std::int64_t> perm_forward() const { return perm_forward_; }
    /// x[v] = shifted[perm_inverse[v]]
    std::span<const std::int64_t> perm_inverse() const { return perm_inverse_; }

    /// windowed row -> voxel of the (already shifted) tensor.
    std::span<const std::int64_t> partition_index() const { return partition_; }
    /// voxel -> windowed row.
    std::span<const std::int64_t> merge_index() const { return merge_; }

    /// Gather index taking the unshifted tensor straight to windowed rows.
    std::span<const std::int64_t> shift_partition_index() const { return shift_partition_; }
    /// Gather index taking windowed rows straight back to the unshifted tensor.
    std::span<const std::int64_t> merge_unshift_index() const { return merge_unshift_; }

    /// Region id (bit 0: wrapped across the polar seam, bit 1: wrapped
    /// vertically) of every windowed row.
    std::span<const std::uint8_t> region_ids() const { return region_; }

    /// Additive masks, n_windows blocks of (W, W), entries 0 or -kMaskLarge.
    std::span<const float> masks() const { return masks_; }
    std::span<const float> window_mask(std::int64_t w) const;
    /// Number of distinct regions present in window w.
    int regions_in_window(std::int64_t w) const;
    bool has_mask() const { return has_mask_; }

private:
    hpx::GridSpec patch_spec_;
    std::int64_t depth_;
    WindowSpec spec_;
    std::int64_t n_windows_ = 0;
    std::vector<std::int64_t> perm_forward_;
    std::vector<std::int64_t> perm_inverse_;
    std::vector<std::int64_t> partition_;
    std::vector<std::int64_t> merge_;
    std::vector<std::int64_t> shift_partition_;
    std::vector<std::int64_t> merge_unshift_;
    std::vector<std::uint8_t> region_;
    std::vector<float> masks_;
    bool has_mask_ = false;
};

/// out[i, :] = x[index[i], :] for rows of length row_len.
template <typename T>
std::vector<T> gather_rows(std::span<const T> x, std::span<const std::int64_t> index, std::int64_t row_len) {
    if (static_cast<std::int64_t>(x.size()) % row_len != 0) throw DimensionError("gather_rows: ragged input");
    const auto n_rows = static_cast<std::int64_t>(x.size()) / row_len;
    std::vector<T> out(index.size() * static_cast<std::size_t>(row_len));
    for (std::size_t i = 0; i < index.size(); ++i) {
        const std::int64_t src = index[i];
        if (src < 0 || src >= n_rows) throw RangeError("gather_rows: index out of range");
        std::copy_n(x.begin() + src * row_len, row_len, out.begin() + static_cast<std::ptrdiff_t>(i) * row_len);
    }
    return out;
}

/// (P, D, C) -> (n_windows, W_hp * W_d, C)
template <typename T>
std::vector<T> partition(std::span<const T> x, const WindowLayout& layout, std::int64_t channels) {
    if (static_cast<std::int64_t>(x.size()) != layout.n_voxels() * channels) {
        throw DimensionError("partition: expected " + std::to_string(layout.n_voxels() * channels) +
                             " values, got " + std::to_string(x.size()));
    }
    return gather_rows(x, layout.partition_index(), channels);
}

/// Inverse of partition.
template <typename T>
std::vector<T> merge(std::span<const T> windows, const WindowLayout& layout, std::int64_t channels) {
    if (static_cast<std::int64_t>(windows.size()) != layout.n_voxels() * channels) {
        throw DimensionError("merge: size mismatch");
    }
    return gather_rows(windows, layout.merge_index(), channels);
}

/// Gather index for a cyclic roll by `shift` pixels in ring order: a value
/// at ring position r moves to (r + shift) mod P. Depth-major voxel layout.
std::vector<std::int64_t> roll_ring_index(const hpx::GridSpec& spec, std::int64_t depth, std::int64_t shift);

/// Roll a (P, D, C) tensor along the ring ordering; P must equal spec.n_pix.
template <typename T>
std::vector<T> roll_ring(std::span<const T> x, const hpx::GridSpec& spec, std::int64_t depth,
                         std::int64_t channels, std::int64_t shift) {
    if (static_cast<std::int64_t>(x.size()) != spec.n_pix * depth * channels) {
        throw DimensionError("roll_ring: size mismatch");
    }
    return gather_rows(x, std::span<const std::int64_t>(roll_ring_index(spec, depth, shift)), channels);
}

template <typename T>
std::vector<T> shift(std::span<const T> x, const WindowLayout& layout, std::int64_t channels) {
    if (static_cast<std::int64_t>(x.size()) != layout.n_voxels() * channels) throw DimensionError("shift: size mismatch");
    return gather_rows(x, layout.perm_forward(), channels);
}

template <typename T>
std::vector<T> unshift(std::span<const T> x, const WindowLayout& layout, std::int64_t channels) {
    if (static_cast<std::int64_t>(x.size()) != layout.n_voxels() * channels) throw DimensionError("unshift: size mismatch");
    return gather_rows(x, layout.perm_inverse(), channels);
}

}  // namespace pear::window
