#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pear/hpx_grid.hpp"

namespace pear::data {

inline constexpr std::int64_t kSurfaceChannels = 4;
inline constexpr std::int64_t kUpperChannels = 5;
inline constexpr std::int64_t kUpperLevels = 13;

inline const std::array<std::string, 4> kSurfaceVariables{"u10", "v10", "t2m", "msl"};
inline const std::array<std::string, 4> kSurfaceUnits{"m/s", "m/s", "K", "Pa"};
inline const std::array<std::string, 5> kUpperVariables{"q", "t", "u", "v", "z"};
inline const std::array<std::string, 5> kUpperUnits{"kg/kg", "K", "m/s", "m/s", "gpm"};

/// Global weather state on a HEALPix grid in nested order.
struct VolumetricState {
    std::int64_t n_side = 0;
    std::vector<float> surface;  // (12 n^2, 4)
    std::vector<float> upper;    // (12 n^2, 13, 5)
    int day_of_year = 1;         // 1 .. 366

    static VolumetricState zeros(std::int64_t n_side);
    std::int64_t n_pix() const { return 12 * n_side * n_side; }
    bool all_finite() const;
};

/// Per-variable mean and standard deviation (upper statistics pool all levels).
struct NormStats {
    std::array<double, kSurfaceChannels> surface_mean{};
    std::array<double, kSurfaceChannels> surface_std{};
    std::array<double, kUpperChannels> upper_mean{};
    std::array<double, kUpperChannels> upper_std{};

    static NormStats identity();
    /// Statistics over every pixel (and level) of `states`; std floored at 1e-12.
    static NormStats compute(std::span<const VolumetricState> states);

    VolumetricState normalize(const VolumetricState& s) const;
    VolumetricState denormalize(const VolumetricState& s) const;
};

/// Equiangular grid: latitudes +90 .. -90 inclusive, longitudes [0, 360).
struct LatLonGrid {
    std::int64_t n_lat = 0;
    std::int64_t n_lon = 0;
    std::int64_t channels = 1;
    std::vector<float> values;  // (n_lat, n_lon, channels)

    double lat_deg(std::int64_t i) const { return 90.0 - 180.0 * static_cast<double>(i) / static_cast<double>(n_lat - 1); }
    double lon_deg(std::int64_t j) const { return 360.0 * static_cast<double>(j) / static_cast<double>(n_lon); }
    float at(std::int64_t i, std::int64_t j, std::int64_t c) const {
        return values[static_cast<std::size_t>((i * n_lon + j) * channels + c)];
    }
    void validate() const;
};

struct ResampleResult {
    std::vector<float> values;  // (12 n^2, channels), nested
    std::int64_t nan_count = 0;
    std::vector<std::string> warnings;
};

/// Bilinear interpolation in (lat, lon) at every pixel center. Longitude
/// wraps around; the pole rows are collapsed to their mean value.
ResampleResult latlon_to_hpx(const LatLonGrid& grid, const hpx::GridSpec& spec);

/// Nearest-pixel sampling of a nested HEALPix field onto a lat-lon grid.
LatLonGrid hpx_to_latlon(std::span<const float> field, const hpx::GridSpec& spec, std::int64_t channels,
                         std::int64_t n_lat, std::int64_t n_lon);

struct SyntheticConfig {
    std::uint64_t seed = 0;
    std::int64_t n_side = 8;
    std::int64_t n_steps = 16;      // number of states, >= 2
    double angular_velocity = 0.2;  // radians about the polar axis per step
    double noise = 0.01;            // noise std relative to each variable's amplitude
    int max_degree = 3;             // highest polynomial degree of the patterns
    int start_day_of_year = 1;
};

/// Smooth low-order patterns rotated eastwards at a constant rate plus
/// Gaussian noise, in physical units.
std::vector<VolumetricState> gen_synthetic(const SyntheticConfig& cfg);

/// Mean absolute error of predicting x_{t+1} = x_t over consecutive pairs,
/// surface weighted by `surface_weight` (in the units of the given states).
double persistence_l1(std::span<const VolumetricState> states, double surface_weight = 0.25);

// ---------------------------------------------------------------------------
// Sphere-tensor files:
//   "PEARSTF1" | u64 header length | JSON header | float32 LE payload

inline constexpr char kSphereMagic[8] = {'P', 'E', 'A', 'R', 'S', 'T', 'F', '1'};

struct SphereTensorHeader {
    std::string grid = "healpix";  // "healpix" or "latlon"
    std::int64_t n_side = 0;
    std::int64_t n_lat = 0;
    std::int64_t n_lon = 0;
    std::string ordering = "nested";
    std::vector<std::int64_t> shape;
    std::vector<std::string> variables;
    std::vector<std::string> units;
    std::vector<double> norm_mean;
    std::vector<double> norm_std;
    std::vector<int> day_of_year;
    std::string timestamp;

    std::int64_t element_count() const;
    bool operator==(const SphereTensorHeader&) const = default;
};

struct SphereTensorFile {
    SphereTensorHeader header;
    std::vector<float> payload;
};

void write_sphere_file(const std::filesystem::path& path, const SphereTensorFile& file);
SphereTensorFile read_sphere_file(const std::filesystem::path& path);

/// A state sequence with its normalization statistics, stored as
/// dir/surface.stf (T, 12n^2, 4) and dir/upper.stf (T, 12n^2, 13, 5).
struct Dataset {
    std::vector<VolumetricState> states;
    std::optional<NormStats> stats;
};

void save_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& dir);

/// Raster exports of one channel of a lat-lon grid.
void write_pgm(const std::filesystem::path& path, const LatLonGrid& grid, std::int64_t channel);
void write_csv(const std::filesystem::path& path, const LatLonGrid& grid, std::int64_t channel);

}  // namespace pear::data
