#pragma once

// HEALPix geometry and index arithmetic.
//
// Faces are numbered 0-3 around the north pole, 4-7 on the equator and
// 8-11 around the south pole. Inside a face the nested index interleaves the
// bits of (x, y) with x on the even bits. Ring indices run along iso-latitude
// circles from the north pole southwards, starting at azimuth ~0 in each ring.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace pear::hpx {

/// Resolution descriptor for a grid with n_side = 2^k.
struct GridSpec {
    int k = 0;
    std::int64_t n_side = 1;
    std::int64_t n_pix = 12;
    double pixel_area = 0.0;  // steradians

    static GridSpec from_level(int k);
    /// Throws ConfigError unless n_side is a positive power of two.
    static GridSpec from_nside(std::int64_t n_side);

    std::int64_t face_pixels() const { return n_side * n_side; }
    std::int64_t n_rings() const { return 4 * n_side - 1; }
    /// Pixels strictly inside the north polar cap (rings 1 .. n_side-1).
    std::int64_t n_cap() const { return 2 * n_side * (n_side - 1); }

    bool operator==(const GridSpec&) const = default;
};

enum class Scheme { nested, ring };

struct PixelIndex {
    Scheme scheme = Scheme::nested;
    std::int64_t value = 0;
};

struct SphereCoord {
    double theta = 0.0;  // colatitude in [0, pi]
    double phi = 0.0;    // azimuth in [0, 2 pi)
};

struct FaceXY {
    int face = 0;
    std::int64_t x = 0;
    std::int64_t y = 0;
};

using Vec3 = std::array<double, 3>;

FaceXY nest2xyf(const GridSpec& spec, std::int64_t nested);
std::int64_t xyf2nest(const GridSpec& spec, const FaceXY& f);

std::int64_t nest2ring(const GridSpec& spec, std::int64_t nested);
std::int64_t ring2nest(const GridSpec& spec, std::int64_t ring);

SphereCoord pixel_center(const GridSpec& spec, PixelIndex p);
Vec3 pixel_vector(const GridSpec& spec, PixelIndex p);

/// Pixel containing the direction (theta, phi).
std::int64_t ang2pix_ring(const GridSpec& spec, SphereCoord c);
std::int64_t ang2pix_nested(const GridSpec& spec, SphereCoord c);

/// 1-based ring number (1 .. 4 n_side - 1) of a ring-ordered pixel.
std::int64_t ring_of(const GridSpec& spec, std::int64_t ring_pixel);

/// Number of pixels on each ring, north to south.
std::vector<std::int64_t> ring_census(const GridSpec& spec);

/// Children of a nested pixel at resolution 2 n_side.
std::array<std::int64_t, 4> children(const GridSpec& spec, std::int64_t nested);
/// Parent of a nested pixel at resolution n_side / 2. Throws ConfigError at k = 0.
std::int64_t parent(const GridSpec& spec, std::int64_t nested);

/// Flat nested -> ring permutation, built once per level and cached.
std::span<const std::int64_t> nest2ring_table(const GridSpec& spec);
/// Flat ring -> nested permutation, built once per level and cached.
std::span<const std::int64_t> ring2nest_table(const GridSpec& spec);

Vec3 to_vector(SphereCoord c);
double angular_distance(SphereCoord a, SphereCoord b);

}  // namespace pear::hpx
