#include "pear/metrics.hpp"

#include <cmath>
#include <fstream>
#include <tuple>

#include "pear/errors.hpp"

namespace pear::metrics {

double rmse(std::span<const float> y, std::span<const float> yhat) {
    if (y.size() != yhat.size()) throw DimensionError("rmse: fields differ in size");
    if (y.empty()) throw DimensionError("rmse: empty field");
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = static_cast<double>(y[i]) - yhat[i];
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(y.size()));
}

std::optional<double> acc(std::span<const float> y, std::span<const float> yhat, std::span<const float> clim) {
    if (y.size() != yhat.size() || y.size() != clim.size()) throw DimensionError("acc: fields differ in size");
    double num = 0.0, ny = 0.0, nh = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double dy = static_cast<double>(y[i]) - clim[i];
        const double dh = static_cast<double>(yhat[i]) - clim[i];
        num += dy * dh;
        ny += dy * dy;
        nh += dh * dh;
    }
    if (ny == 0.0 || nh == 0.0) return std::nullopt;
    return std::clamp(num / std::sqrt(ny * nh), -1.0, 1.0);
}

double level_mean(std::span<const double> values) {
    if (values.empty()) throw DimensionError("level_mean: no values");
    double s = 0.0;
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
}

std::vector<float> surface_field(const data::VolumetricState& s, std::int64_t channel) {
    if (channel < 0 || channel >= data::kSurfaceChannels) throw RangeError("surface channel out of range");
    const auto n = s.n_pix();
    std::vector<float> out(static_cast<std::size_t>(n));
    for (std::int64_t p = 0; p < n; ++p) {
        out[static_cast<std::size_t>(p)] = s.surface[static_cast<std::size_t>(p * data::kSurfaceChannels + channel)];
    }
    return out;
}

std::vector<float> upper_field(const data::VolumetricState& s, std::int64_t channel, std::int64_t level) {
    if (channel < 0 || channel >= data::kUpperChannels) throw RangeError("upper channel out of range");
    if (level < 0 || level >= data::kUpperLevels) throw RangeError("upper level out of range");
    const auto n = s.n_pix();
    std::vector<float> out(static_cast<std::size_t>(n));
    for (std::int64_t p = 0; p < n; ++p) {
        out[static_cast<std::size_t>(p)] =
            s.upper[static_cast<std::size_t>((p * data::kUpperLevels + level) * data::kUpperChannels + channel)];
    }
    return out;
}

namespace {

void check_same_grid(const data::VolumetricState& a, const data::VolumetricState& b, const char* what) {
    if (a.n_side != b.n_side || a.surface.size() != b.surface.size() || a.upper.size() != b.upper.size()) {
        throw DimensionError(std::string("metrics: ") + what + " is on a different grid");
    }
}

}  // namespace

std::vector<MetricRow> state_metrics(const data::VolumetricState& truth, const data::VolumetricState& pred,
                                     const data::VolumetricState& clim, int lead_time_days) {
    check_same_grid(truth, pred, "prediction");
    check_same_grid(truth, clim, "climatology");
    std::vector<MetricRow> rows;
    auto make_row = [&](const std::string& var, int level, const std::vector<float>& y, const std::vector<float>& h,
                        const std::vector<float>& c) {
        MetricRow r;
        r.lead_time_days = lead_time_days;
        r.variable = var;
        r.level = level;
        r.rmse = rmse(y, h);
        r.acc = acc(y, h, c);
        r.n_samples = 1;
        r.n_acc_samples = r.acc ? 1 : 0;
        return r;
    };
    for (std::int64_t c = 0; c < data::kSurfaceChannels; ++c) {
        rows.push_back(make_row(data::kSurfaceVariables[static_cast<std::size_t>(c)], kSurfaceLevel,
                                surface_field(truth, c), surface_field(pred, c), surface_field(clim, c)));
    }
    for (std::int64_t c = 0; c < data::kUpperChannels; ++c) {
        const auto& name = data::kUpperVariables[static_cast<std::size_t>(c)];
        std::vector<double> level_rmse, level_acc;
        for (std::int64_t l = 0; l < data::kUpperLevels; ++l) {
            rows.push_back(make_row(name, static_cast<int>(l), upper_field(truth, c, l), upper_field(pred, c, l),
                                    upper_field(clim, c, l)));
            level_rmse.push_back(rows.back().rmse);
            if (rows.back().acc) level_acc.push_back(*rows.back().acc);
        }
        MetricRow m;
        m.lead_time_days = lead_time_days;
        m.variable = name;
        m.level = kLevelMean;
        m.rmse = level_mean(level_rmse);
        if (!level_acc.empty()) m.acc = level_mean(level_acc);
        m.n_samples = 1;
        m.n_acc_samples = m.acc ? 1 : 0;
        rows.push_back(m);
    }
    return rows;
}

std::vector<MetricRow> aggregate(const std::vector<std::vector<MetricRow>>& per_sample) {
    std::vector<MetricRow> out;
    std::map<std::tuple<int, std::string, int>, std::size_t> index;
    std::vector<double> acc_sum;
    for (const auto& sample : per_sample) {
        for (const auto& r : sample) {
            const auto key = std::make_tuple(r.lead_time_days, r.variable, r.level);
            auto it = index.find(key);
            if (it == index.end()) {
                it = index.emplace(key, out.size()).first;
                MetricRow fresh = r;
                fresh.rmse = 0.0;
                fresh.acc.reset();
                fresh.n_samples = 0;
                fresh.n_acc_samples = 0;
                out.push_back(fresh);
                acc_sum.push_back(0.0);
            }
            auto& agg = out[it->second];
            agg.rmse += r.rmse * static_cast<double>(r.n_samples);
            agg.n_samples += r.n_samples;
            if (r.acc) {
                acc_sum[it->second] += *r.acc * static_cast<double>(r.n_acc_samples);
                agg.n_acc_samples += r.n_acc_samples;
            }
        }
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out[i].n_samples > 0) out[i].rmse /= static_cast<double>(out[i].n_samples);
        if (out[i].n_acc_samples > 0) out[i].acc = acc_sum[i] / static_cast<double>(out[i].n_acc_samples);
    }
    return out;
}

ClimatologyTable ClimatologyTable::build(std::span<const data::VolumetricState> training) {
    if (training.empty()) throw ContractError("climatology needs at least one training sample");
    ClimatologyTable t;
    t.n_side_ = training.front().n_side;
    std::map<int, std::pair<std::vector<double>, std::vector<double>>> sums;
    for (const auto& s : training) {
        if (s.n_side != t.n_side_) throw ContractError("climatology samples mix grid resolutions");
        if (s.day_of_year < 1 || s.day_of_year > 366) throw RangeError("sample day_of_year outside 1..366");
        auto& [ss, su] = sums[s.day_of_year];
        if (ss.empty()) {
            ss.assign(s.surface.size(), 0.0);
            su.assign(s.upper.size(), 0.0);
        }
        for (std::size_t i = 0; i < ss.size(); ++i) ss[i] += s.surface[i];
        for (std::size_t i = 0; i < su.size(); ++i) su[i] += s.upper[i];
        ++t.counts_[s.day_of_year];
    }
    for (const auto& [day, acc_pair] : sums) {
        const double n = static_cast<double>(t.counts_[day]);
        auto mean = data::VolumetricState::zeros(t.n_side_);
        mean.day_of_year = day;
        for (std::size_t i = 0; i < mean.surface.size(); ++i) mean.surface[i] = static_cast<float>(acc_pair.first[i] / n);
        for (std::size_t i = 0; i < mean.upper.size(); ++i) mean.upper[i] = static_cast<float>(acc_pair.second[i] / n);
        t.days_.emplace(day, std::move(mean));
    }

    std::vector<int> filled;
    for (int d = 1; d <= 366; ++d) {
        if (t.days_.count(d)) {
            t.source_day_[static_cast<std::size_t>(d)] = d;
            continue;
        }
        if (d == 366 && t.days_.count(365)) {
            t.source_day_[366] = 365;
            continue;
        }
        int best = -1, best_dist = 1000;
        for (const auto& [day, _] : t.days_) {
            const int raw = std::abs(day - d);
            const int dist = std::min(raw, 365 - raw);
            if (dist < best_dist) {
                best = day;
                best_dist = dist;
            }
        }
        t.source_day_[static_cast<std::size_t>(d)] = best;
        filled.push_back(d);
    }
    if (!filled.empty()) {
        t.warnings_.push_back(std::to_string(filled.size()) + " of 366 days have no training samples (first: day " +
                              std::to_string(filled.front()) + "); they use the nearest populated day");
    }
    return t;
}

const data::VolumetricState& ClimatologyTable::for_day(int day_of_year) const {
    if (day_of_year < 1 || day_of_year > 366) throw RangeError("day_of_year outside 1..366");
    if (days_.empty()) throw ContractError("climatology table is empty");
    return days_.at(source_day_[static_cast<std::size_t>(day_of_year)]);
}

std::int64_t ClimatologyTable::count(int day_of_year) const {
    const auto it = counts_.find(day_of_year);
    return it == counts_.end() ? 0 : it->second;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricRow>& rows) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw FormatError("cannot open " + path.string() + " for writing");
    os << "lead_time_days,variable,level,rmse,acc,n_samples\n";
    os.precision(10);
    for (const auto& r : rows) {
        os << r.lead_time_days << ',' << r.variable << ',';
        if (r.level == kSurfaceLevel) {
            os << "surface";
        } else if (r.level == kLevelMean) {
            os << "mean";
        } else {
            os << r.level;
        }
        os << ',' << r.rmse << ',';
        if (r.acc) {
            os << *r.acc;
        } else {
            os << "nan";
        }
        os << ',' << r.n_samples << '\n';
    }
    if (!os) throw FormatError("write failed for " + path.string());
}

}  // namespace pear::metrics
