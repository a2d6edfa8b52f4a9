#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "pear/data.hpp"
#include "pear/errors.hpp"

namespace pear::data {

void LatLonGrid::validate() const {
    if (n_lat < 2) throw ConfigError("lat-lon grid needs n_lat >= 2");
    if (n_lon < 1) throw ConfigError("lat-lon grid needs n_lon >= 1");
    if (channels < 1) throw ConfigError("lat-lon grid needs at least one channel");
    if (static_cast<std::int64_t>(values.size()) != n_lat * n_lon * channels) {
        throw DimensionError("lat-lon values must have n_lat * n_lon * channels entries");
    }
}

ResampleResult latlon_to_hpx(const LatLonGrid& grid, const hpx::GridSpec& spec) {
    grid.validate();
    constexpr double pi = std::numbers::pi;
    const auto c_count = grid.channels;
    const double dlat = pi / static_cast<double>(grid.n_lat - 1);
    const double dlon = 2.0 * pi / static_cast<double>(grid.n_lon);

    ResampleResult out;
    const double target_res = std::sqrt(spec.pixel_area);
    if (dlat > target_res || dlon > target_res) {
        std::ostringstream msg;
        msg << "source spacing (" << dlat << ", " << dlon << ") rad is coarser than the target pixel size "
            << target_res << " rad";
        out.warnings.push_back(msg.str());
    }

    // Pole rows are single-valued: collapse each to its mean over longitude.
    std::vector<double> north(static_cast<std::size_t>(c_count)), south(north.size());
    for (std::int64_t c = 0; c < c_count; ++c) {
        double sn = 0.0, ss = 0.0;
        for (std::int64_t j = 0; j < grid.n_lon; ++j) {
            sn += grid.at(0, j, c);
            ss += grid.at(grid.n_lat - 1, j, c);
        }
        north[static_cast<std::size_t>(c)] = sn / static_cast<double>(grid.n_lon);
        south[static_cast<std::size_t>(c)] = ss / static_cast<double>(grid.n_lon);
    }
    auto row_value = [&](std::int64_t i, std::int64_t j0, std::int64_t j1, double s, std::int64_t c) {
        if (i == 0) return north[static_cast<std::size_t>(c)];
        if (i == grid.n_lat - 1) return south[static_cast<std::size_t>(c)];
        return (1.0 - s) * grid.at(i, j0, c) + s * grid.at(i, j1, c);
    };

    out.values.resize(static_cast<std::size_t>(spec.n_pix * c_count));
    for (std::int64_t p = 0; p < spec.n_pix; ++p) {
        const auto sc = hpx::pixel_center(spec, {hpx::Scheme::nested, p});
        const double u = sc.theta / dlat;
        auto i0 = static_cast<std::int64_t>(std::floor(u));
        i0 = std::clamp<std::int64_t>(i0, 0, grid.n_lat - 2);
        const double t = u - static_cast<double>(i0);
        const double v = sc.phi / dlon;
        const double vf = std::floor(v);
        const double s = v - vf;
        const auto j0 = ((static_cast<std::int64_t>(vf) % grid.n_lon) + grid.n_lon) % grid.n_lon;
        const auto j1 = (j0 + 1) % grid.n_lon;
        for (std::int64_t c = 0; c < c_count; ++c) {
            const double a = row_value(i0, j0, j1, s, c);
            const double b = row_value(i0 + 1, j0, j1, s, c);
            const auto value = static_cast<float>((1.0 - t) * a + t * b);
            if (std::isnan(value)) ++out.nan_count;
            out.values[static_cast<std::size_t>(p * c_count + c)] = value;
        }
    }
    if (out.nan_count > 0) {
        out.warnings.push_back(std::to_string(out.nan_count) + " output values are NaN (propagated from the source)");
    }
    return out;
}

LatLonGrid hpx_to_latlon(std::span<const float> field, const hpx::GridSpec& spec, std::int64_t channels,
                         std::int64_t n_lat, std::int64_t n_lon) {
    if (channels < 1 || static_cast<std::int64_t>(field.size()) != spec.n_pix * channels) {
        throw DimensionError("field must have 12 n_side^2 * channels values");
    }
    LatLonGrid g;
    g.n_lat = n_lat;
    g.n_lon = n_lon;
    g.channels = channels;
    g.values.assign(static_cast<std::size_t>(n_lat * n_lon * channels), 0.0f);
    g.validate();
    constexpr double deg = std::numbers::pi / 180.0;
    for (std::int64_t i = 0; i < n_lat; ++i) {
        const double theta = (90.0 - g.lat_deg(i)) * deg;
        for (std::int64_t j = 0; j < n_lon; ++j) {
            const auto p = hpx::ang2pix_nested(spec, {theta, g.lon_deg(j) * deg});
            for (std::int64_t c = 0; c < channels; ++c) {
                g.values[static_cast<std::size_t>((i * n_lon + j) * channels + c)] =
                    field[static_cast<std::size_t>(p * channels + c)];
            }
        }
    }
    return g;
}

void write_pgm(const std::filesystem::path& path, const LatLonGrid& grid, std::int64_t channel) {
    grid.validate();
    if (channel < 0 || channel >= grid.channels) throw RangeError("raster channel out of range");
    float lo = std::numeric_limits<float>::infinity(), hi = -lo;
    for (std::int64_t i = 0; i < grid.n_lat; ++i) {
        for (std::int64_t j = 0; j < grid.n_lon; ++j) {
            const float v = grid.at(i, j, channel);
            if (std::isfinite(v)) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
    }
    const float range = hi > lo ? hi - lo : 1.0f;
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot open " + path.string() + " for writing");
    os << "P5\n" << grid.n_lon << " " << grid.n_lat << "\n255\n";
    for (std::int64_t i = 0; i < grid.n_lat; ++i) {
        for (std::int64_t j = 0; j < grid.n_lon; ++j) {
            const float v = grid.at(i, j, channel);
            const int level = std::isfinite(v) ? static_cast<int>(std::lround(255.0f * (v - lo) / range)) : 0;
            os.put(static_cast<char>(std::clamp(level, 0, 255)));
        }
    }
}

void write_csv(const std::filesystem::path& path, const LatLonGrid& grid, std::int64_t channel) {
    grid.validate();
    if (channel < 0 || channel >= grid.channels) throw RangeError("raster channel out of range");
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw FormatError("cannot open " + path.string() + " for writing");
    os << "lat,lon,value\n";
    os.precision(9);
    for (std::int64_t i = 0; i < grid.n_lat; ++i) {
        for (std::int64_t j = 0; j < grid.n_lon; ++j) {
            os << grid.lat_deg(i) << "," << grid.lon_deg(j) << "," << grid.at(i, j, channel) << "\n";
        }
    }
}

}  // namespace pear::data
