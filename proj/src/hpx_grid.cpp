#include "pear/hpx_grid.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>

#include "pear/errors.hpp"

namespace pear::hpx {
namespace {

constexpr int kMaxLevel = 29;

// Base-face row (in units of n_side, counted from the north pole) and
// azimuthal offset (in units of pi/4) of each face's southernmost corner.
constexpr std::array<std::int64_t, 12> kFaceRow = {2, 2, 2, 2, 3, 3, 3, 3, 4, 4, 4, 4};
constexpr std::array<std::int64_t, 12> kFacePhi = {1, 3, 5, 7, 0, 2, 4, 6, 1, 3, 5, 7};

std::int64_t isqrt(std::int64_t v) {
    auto r = static_cast<std::int64_t>(std::sqrt(static_cast<double>(v)));
    while (r * r > v) --r;
    while ((r + 1) * (r + 1) <= v) ++r;
    return r;
}

std::int64_t spread_bits(std::int64_t v) {
    std::int64_t out = 0;
    for (int b = 0; b < kMaxLevel + 1; ++b) out |= ((v >> b) & 1) << (2 * b);
    return out;
}

std::int64_t compress_bits(std::int64_t v) {
    std::int64_t out = 0;
    for (int b = 0; b < kMaxLevel + 1; ++b) out |= ((v >> (2 * b)) & 1) << b;
    return out;
}

void check_index(const GridSpec& spec, std::int64_t p, const char* what) {
    if (p < 0 || p >= spec.n_pix) {
        throw RangeError(std::string(what) + ": pixel " + std::to_string(p) +
                         " outside [0, " + std::to_string(spec.n_pix) + ")");
    }
}

FaceXY ring2xyf(const GridSpec& spec, std::int64_t pix) {
    const std::int64_t n = spec.n_side;
    const std::int64_t ncap = spec.n_cap();
    const std::int64_t nl2 = 2 * n;
    std::int64_t iring = 0, iphi = 0, kshift = 0, nr = 0;
    int face = 0;

    if (pix < ncap) {
        iring = (1 + isqrt(1 + 2 * pix)) / 2;
        iphi = (pix + 1) - 2 * iring * (iring - 1);
        nr = iring;
        std::int64_t tmp = iphi - 1;
        if (tmp >= 2 * iring) {
            face = 2;
            tmp -= 2 * iring;
        }
        if (tmp >= iring) ++face;
    } else if (pix < spec.n_pix - ncap) {
        const std::int64_t ip = pix - ncap;
        iring = ip / (4 * n) + n;
        iphi = ip % (4 * n) + 1;
        kshift = (iring + n) & 1;
        nr = n;
        const std::int64_t ire = iring - n + 1;
        const std::int64_t irm = nl2 + 2 - ire;
        const std::int64_t ifm = (iphi - ire / 2 + n - 1) / n;
        const std::int64_t ifp = (iphi - irm / 2 + n - 1) / n;
        if (ifp == ifm) {
            face = ifp == 4 ? 4 : static_cast<int>(ifp) + 4;
        } else if (ifp < ifm) {
            face = static_cast<int>(ifp);
        } else {
            face = static_cast<int>(ifm) + 8;
        }
    } else {
        const std::int64_t ip = spec.n_pix - pix;
        iring = (1 + isqrt(2 * ip - 1)) / 2;
        iphi = 4 * iring + 1 - (ip - 2 * iring * (iring - 1));
        nr = iring;
        iring = 2 * nl2 - iring;
        face = 8;
        std::int64_t tmp = iphi - 1;
        if (tmp >= 2 * nr) {
            face = 10;
            tmp -= 2 * nr;
        }
        if (tmp >= nr) ++face;
    }

    const std::int64_t irt = iring - kFaceRow[face] * n + 1;
    std::int64_t ipt = 2 * iphi - kFacePhi[face] * nr - kshift - 1;
    if (ipt >= nl2) ipt -= 8 * n;
    // Arithmetic shifts: both quantities can be negative.
    return {face, (ipt - irt) >> 1, (-(ipt + irt)) >> 1};
}

std::int64_t xyf2ring(const GridSpec& spec, const FaceXY& f) {
    const std::int64_t n = spec.n_side;
    const std::int64_t nl4 = 4 * n;
    const std::int64_t jr = kFaceRow[f.face] * n - f.x - f.y - 1;

    std::int64_t nr = 0, n_before = 0, kshift = 0;
    if (jr < n) {
        nr = jr;
        n_before = 2 * nr * (nr - 1);
    } else if (jr > 3 * n) {
        nr = nl4 - jr;
        n_before = spec.n_pix - 2 * (nr + 1) * nr;
    } else {
        nr = n;
        n_before = spec.n_cap() + (jr - n) * nl4;
        kshift = (jr - n) & 1;
    }

    std::int64_t jp = (kFacePhi[f.face] * nr + f.x - f.y + 1 + kshift) / 2;
    if (jp > nl4) {
        jp -= nl4;
    } else if (jp < 1) {
        jp += nl4;
    }
    return n_before + jp - 1;
}

struct Tables {
    std::vector<std::int64_t> n2r;
    std::vector<std::int64_t> r2n;
};

const Tables& cached_tables(const GridSpec& spec) {
    static std::mutex mutex;
    static std::map<int, std::unique_ptr<Tables>> cache;
    std::lock_guard lock(mutex);
    auto& slot = cache[spec.k];
    if (!slot) {
        auto t = std::make_unique<Tables>();
        t->n2r.resize(static_cast<std::size_t>(spec.n_pix));
        t->r2n.resize(static_cast<std::size_t>(spec.n_pix));
        for (std::int64_t p = 0; p < spec.n_pix; ++p) {
            const std::int64_t r = xyf2ring(spec, nest2xyf(spec, p));
            t->n2r[static_cast<std::size_t>(p)] = r;
            t->r2n[static_cast<std::size_t>(r)] = p;
        }
        slot = std::move(t);
    }
    return *slot;
}

}  // namespace

GridSpec GridSpec::from_level(int k) {
    if (k < 0 || k > kMaxLevel) throw ConfigError("HEALPix level out of range: " + std::to_string(k));
    GridSpec s;
    s.k = k;
    s.n_side = std::int64_t{1} << k;
    s.n_pix = 12 * s.n_side * s.n_side;
    s.pixel_area = 4.0 * std::numbers::pi / static_cast<double>(s.n_pix);
    return s;
}

GridSpec GridSpec::from_nside(std::int64_t n_side) {
    if (n_side <= 0 || (n_side & (n_side - 1)) != 0) {
        throw ConfigError("n_side must be a positive power of two, got " + std::to_string(n_side));
    }
    int k = 0;
    while ((std::int64_t{1} << k) < n_side) ++k;
    return from_level(k);
}

FaceXY nest2xyf(const GridSpec& spec, std::int64_t nested) {
    check_index(spec, nested, "nest2xyf");
    const std::int64_t npface = spec.face_pixels();
    const std::int64_t local = nested % npface;
    return {static_cast<int>(nested / npface), compress_bits(local), compress_bits(local >> 1)};
}

std::int64_t xyf2nest(const GridSpec& spec, const FaceXY& f) {
    if (f.face < 0 || f.face >= 12 || f.x < 0 || f.y < 0 || f.x >= spec.n_side || f.y >= spec.n_side) {
        throw RangeError("xyf2nest: face coordinate out of range");
    }
    return f.face * spec.face_pixels() + (spread_bits(f.x) | (spread_bits(f.y) << 1));
}

std::int64_t nest2ring(const GridSpec& spec, std::int64_t nested) {
    return xyf2ring(spec, nest2xyf(spec, nested));
}

std::int64_t ring2nest(const GridSpec& spec, std::int64_t ring) {
    check_index(spec, ring, "ring2nest");
    return xyf2nest(spec, ring2xyf(spec, ring));
}

std::int64_t ring_of(const GridSpec& spec, std::int64_t pix) {
    check_index(spec, pix, "ring_of");
    const std::int64_t n = spec.n_side;
    const std::int64_t ncap = spec.n_cap();
    if (pix < ncap) return (1 + isqrt(1 + 2 * pix)) / 2;
    if (pix < spec.n_pix - ncap) return (pix - ncap) / (4 * n) + n;
    const std::int64_t ip = spec.n_pix - pix;
    return 4 * n - (1 + isqrt(2 * ip - 1)) / 2;
}

std::vector<std::int64_t> ring_census(const GridSpec& spec) {
    const std::int64_t n = spec.n_side;
    std::vector<std::int64_t> sizes;
    sizes.reserve(static_cast<std::size_t>(spec.n_rings()));
    for (std::int64_t i = 1; i <= spec.n_rings(); ++i) {
        if (i < n) {
            sizes.push_back(4 * i);
        } else if (i <= 3 * n) {
            sizes.push_back(4 * n);
        } else {
            sizes.push_back(4 * (4 * n - i));
        }
    }
    return sizes;
}

SphereCoord pixel_center(const GridSpec& spec, PixelIndex p) {
    const std::int64_t pix = p.scheme == Scheme::nested ? nest2ring(spec, p.value) : p.value;
    check_index(spec, pix, "pixel_center");
    const std::int64_t n = spec.n_side;
    const std::int64_t ncap = spec.n_cap();
    const double half_pi = std::numbers::pi / 2.0;
    const double nd = static_cast<double>(n);

    if (pix < ncap) {
        const std::int64_t iring = (1 + isqrt(1 + 2 * pix)) / 2;
        const std::int64_t iphi = (pix + 1) - 2 * iring * (iring - 1);
        // 1 - cos(theta) = iring^2 / (3 n^2), written via the half angle for accuracy.
        const double theta = 2.0 * std::asin(static_cast<double>(iring) / (nd * std::sqrt(6.0)));
        return {theta, (static_cast<double>(iphi) - 0.5) * half_pi / static_cast<double>(iring)};
    }
    if (pix < spec.n_pix - ncap) {
        const std::int64_t ip = pix - ncap;
        const std::int64_t iring = ip / (4 * n) + n;
        const std::int64_t iphi = ip % (4 * n) + 1;
        const double fodd = ((iring + n) & 1) ? 1.0 : 0.5;
        const double z = static_cast<double>(2 * n - iring) * 2.0 / (3.0 * nd);
        return {std::acos(z), (static_cast<double>(iphi) - fodd) * std::numbers::pi / (2.0 * nd)};
    }
    const std::int64_t ip = spec.n_pix - pix;
    const std::int64_t iring = (1 + isqrt(2 * ip - 1)) / 2;
    const std::int64_t iphi = 4 * iring + 1 - (ip - 2 * iring * (iring - 1));
    const double theta =
        std::numbers::pi - 2.0 * std::asin(static_cast<double>(iring) / (nd * std::sqrt(6.0)));
    return {theta, (static_cast<double>(iphi) - 0.5) * half_pi / static_cast<double>(iring)};
}

Vec3 to_vector(SphereCoord c) {
    const double s = std::sin(c.theta);
    return {s * std::cos(c.phi), s * std::sin(c.phi), std::cos(c.theta)};
}

Vec3 pixel_vector(const GridSpec& spec, PixelIndex p) { return to_vector(pixel_center(spec, p)); }

double angular_distance(SphereCoord a, SphereCoord b) {
    const Vec3 u = to_vector(a);
    const Vec3 v = to_vector(b);
    const Vec3 cross = {u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]};
    const double sin_d = std::sqrt(cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]);
    const double cos_d = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    return std::atan2(sin_d, cos_d);
}

std::int64_t ang2pix_ring(const GridSpec& spec, SphereCoord c) {
    const std::int64_t n = spec.n_side;
    const double nd = static_cast<double>(n);
    const double z = std::cos(c.theta);
    const double za = std::abs(z);
    double tt = std::fmod(c.phi, 2.0 * std::numbers::pi);
    if (tt < 0) tt += 2.0 * std::numbers::pi;
    tt /= std::numbers::pi / 2.0;  // in [0, 4)

    if (za <= 2.0 / 3.0) {
        const double temp1 = nd * (0.5 + tt);
        const double temp2 = nd * z * 0.75;
        const auto jp = static_cast<std::int64_t>(temp1 - temp2);
        const auto jm = static_cast<std::int64_t>(temp1 + temp2);
        const std::int64_t ir = n + 1 + jp - jm;  // 1 .. 2n+1
        const std::int64_t kshift = 1 - (ir & 1);
        std::int64_t ip = (jp + jm - n + kshift + 1) / 2;
        ip = ((ip % (4 * n)) + 4 * n) % (4 * n);
        return spec.n_cap() + (ir - 1) * 4 * n + ip;
    }

    const double tp = tt - std::floor(tt);
    const double tmp = nd * std::sqrt(3.0 * (1.0 - za));
    const auto jp = static_cast<std::int64_t>(tp * tmp);
    const auto jm = static_cast<std::int64_t>((1.0 - tp) * tmp);
    const std::int64_t ir = jp + jm + 1;
    std::int64_t ip = static_cast<std::int64_t>(tt * static_cast<double>(ir));
    ip = ((ip % (4 * ir)) + 4 * ir) % (4 * ir);
    if (z > 0) return 2 * ir * (ir - 1) + ip;
    return spec.n_pix - 2 * ir * (ir + 1) + ip;
}

std::int64_t ang2pix_nested(const GridSpec& spec, SphereCoord c) {
    return ring2nest_table(spec)[static_cast<std::size_t>(ang2pix_ring(spec, c))];
}

std::array<std::int64_t, 4> children(const GridSpec& spec, std::int64_t nested) {
    check_index(spec, nested, "children");
    return {4 * nested, 4 * nested + 1, 4 * nested + 2, 4 * nested + 3};
}

std::int64_t parent(const GridSpec& spec, std::int64_t nested) {
    if (spec.k == 0) throw ConfigError("parent: no coarser level below n_side = 1");
    check_index(spec, nested, "parent");
    return nested / 4;
}

std::span<const std::int64_t> nest2ring_table(const GridSpec& spec) { return cached_tables(spec).n2r; }

std::span<const std::int64_t> ring2nest_table(const GridSpec& spec) { return cached_tables(spec).r2n; }

}  // namespace pear::hpx
