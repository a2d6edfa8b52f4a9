#pragma once

// Forecast verification on the equal-area grid. No spatial weights are
// applied anywhere: every pixel counts the same.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pear/data.hpp"

namespace pear::metrics {

/// sqrt(mean((y - yhat)^2)) over all entries.
double rmse(std::span<const float> y, std::span<const float> yhat);

/// Anomaly correlation: sum(dy * dyhat) / sqrt(sum(dy^2) * sum(dyhat^2)) with
/// dy = y - clim, dyhat = yhat - clim. Empty when either anomaly norm is zero.
std::optional<double> acc(std::span<const float> y, std::span<const float> yhat, std::span<const float> clim);

/// Arithmetic mean.
double level_mean(std::span<const double> values);

inline constexpr int kSurfaceLevel = -1;
inline constexpr int kLevelMean = -2;

/// One field of a VolumetricState as a contiguous vector.
std::vector<float> surface_field(const data::VolumetricState& s, std::int64_t channel);
std::vector<float> upper_field(const data::VolumetricState& s, std::int64_t channel, std::int64_t level);

struct MetricRow {
    int lead_time_days = 0;
    std::string variable;
    int level = kSurfaceLevel;  // kSurfaceLevel, 0..12, or kLevelMean
    double rmse = 0.0;
    std::optional<double> acc;
    std::int64_t n_samples = 0;      // samples contributing to rmse
    std::int64_t n_acc_samples = 0;  // samples with a defined acc
};

/// Rows for every surface variable, every (upper variable, level) and the
/// per-variable level mean, for a single sample.
std::vector<MetricRow> state_metrics(const data::VolumetricState& truth, const data::VolumetricState& pred,
                                     const data::VolumetricState& clim, int lead_time_days);

/// Averages rows keyed by (lead, variable, level) over samples. Undefined ACC
/// values are excluded and counted separately. Output order is deterministic.
std::vector<MetricRow> aggregate(const std::vector<std::vector<MetricRow>>& per_sample);

/// Per-day-of-year mean state over the training years.
class ClimatologyTable {
public:
    /// Samples are bucketed by day_of_year. Throws ContractError on an empty
    /// input or mixed grids.
    static ClimatologyTable build(std::span<const data::VolumetricState> training);

    /// Day 366 falls back to 365; any other empty day falls back to the
    /// nearest populated day (ties go to the earlier day), with a warning
    /// recorded at build time. Throws RangeError outside 1..366.
    const data::VolumetricState& for_day(int day_of_year) const;

    bool has_day(int day_of_year) const { return days_.count(day_of_year) != 0; }
    std::int64_t n_side() const { return n_side_; }
    /// Number of samples averaged into a populated day.
    std::int64_t count(int day_of_year) const;
    const std::vector<std::string>& warnings() const { return warnings_; }

private:
    std::int64_t n_side_ = 0;
    std::map<int, data::VolumetricState> days_;
    std::map<int, std::int64_t> counts_;
    std::array<int, 367> source_day_{};
    std::vector<std::string> warnings_;
};

/// Columns: lead_time_days, variable, level, rmse, acc, n_samples. Level is
/// "surface", a level index, or "mean"; a missing acc is written as "nan".
void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricRow>& rows);

}  // namespace pear::metrics
