#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spar/csv.hpp"
#include "spar/errors.hpp"
#include "spar/simplex_fit.hpp"
#include "spar/tensor.hpp"

namespace spar {

inline std::size_t steps_per_day(const std::string& resolution) {
    if (resolution == "1h") return 24;
    if (resolution == "30min") return 48;
    throw data_error("unknown time resolution '" + resolution + "' (expected 1h or 30min)");
}

/// Periodicity strength per series at a target lag: the fitted coefficient
/// at that lag, 0 when the lag was not selected, absent for series that
/// were missing or failed to fit.
struct PeriodicityReport {
    int target_lag = 0;
    std::vector<std::string> locations;
    std::vector<std::string> variables;
    std::vector<std::vector<std::optional<double>>> strengths; // [location][variable]
    std::vector<double> thresholds;
    SupportSet support_used;

    struct VariableAggregate {
        std::size_t present = 0;
        double mean = std::numeric_limits<double>::quiet_NaN();
        std::vector<std::size_t> count_at_least; // aligned with thresholds
    };
    std::vector<VariableAggregate> aggregates;

    std::optional<double> strength(std::size_t location, std::size_t variable) const {
        return strengths[location][variable];
    }
};

inline PeriodicityReport extract_strengths(const CoefficientField& field, int target_lag,
                                           std::vector<double> thresholds = {0.8}) {
    if (field.records.empty()) throw usage_error("empty coefficient field");
    if (target_lag < 1) throw usage_error("target lag must be >= 1");
    if (field.order > 0 && target_lag > field.order)
        throw usage_error("target lag " + std::to_string(target_lag) + " exceeds order " +
                          std::to_string(field.order));

    PeriodicityReport report;
    report.target_lag = target_lag;
    report.locations = field.locations;
    report.variables = field.variables;
    report.thresholds = std::move(thresholds);
    report.support_used = field.support;
    report.strengths.assign(field.locations.size(),
                            std::vector<std::optional<double>>(field.variables.size()));

    const std::size_t lag_pos = field.support.index_of(target_lag);
    for (const auto& rec : field.records) {
        if (rec.status != CoefficientField::Status::ok) continue;
        const double value = lag_pos < field.support.size() ? rec.fit->coeffs[lag_pos] : 0.0;
        report.strengths[rec.key.location][rec.key.variable] = value;
    }

    report.aggregates.resize(field.variables.size());
    for (std::size_t v = 0; v < field.variables.size(); ++v) {
        auto& agg = report.aggregates[v];
        agg.count_at_least.assign(report.thresholds.size(), 0);
        double sum = 0.0;
        for (std::size_t n = 0; n < field.locations.size(); ++n) {
            const auto& s = report.strengths[n][v];
            if (!s) continue;
            ++agg.present;
            sum += *s;
            for (std::size_t t = 0; t < report.thresholds.size(); ++t)
                if (*s >= report.thresholds[t]) ++agg.count_at_least[t];
        }
        if (agg.present > 0) agg.mean = sum / static_cast<double>(agg.present);
    }
    return report;
}

/// Restrict a report to one variable (used to set up year-over-year diffs).
inline PeriodicityReport slice_variable(const PeriodicityReport& report, const std::string& variable) {
    std::size_t v = report.variables.size();
    for (std::size_t i = 0; i < report.variables.size(); ++i)
        if (report.variables[i] == variable) v = i;
    if (v == report.variables.size()) throw bad_index_error("unknown variable: '" + variable + "'");
    PeriodicityReport out;
    out.target_lag = report.target_lag;
    out.locations = report.locations;
    out.variables = {report.variables[v]};
    out.thresholds = report.thresholds;
    out.support_used = report.support_used;
    out.strengths.assign(report.locations.size(), std::vector<std::optional<double>>(1));
    for (std::size_t n = 0; n < report.locations.size(); ++n)
        out.strengths[n][0] = report.strengths[n][v];
    out.aggregates = {report.aggregates[v]};
    return out;
}

/// Per-location strength difference b - a between two single-variable
/// reports over the same locations; absent wherever either side is absent.
struct DiffReport {
    int target_lag = 0;
    std::string variable_a, variable_b;
    std::vector<std::string> locations;
    std::vector<std::optional<double>> diffs;
};

inline DiffReport diff_strengths(const PeriodicityReport& a, const PeriodicityReport& b) {
    if (a.variables.size() != 1 || b.variables.size() != 1)
        throw usage_error("diff_strengths expects single-variable reports (use slice_variable)");
    if (a.target_lag != b.target_lag)
        throw usage_error("diff_strengths: reports target different lags");
    if (a.locations != b.locations) {
        std::string missing_in_b, missing_in_a;
        for (const auto& loc : a.locations)
            if (std::find(b.locations.begin(), b.locations.end(), loc) == b.locations.end())
                missing_in_b += missing_in_b.empty() ? loc : ", " + loc;
        for (const auto& loc : b.locations)
            if (std::find(a.locations.begin(), a.locations.end(), loc) == a.locations.end())
                missing_in_a += missing_in_a.empty() ? loc : ", " + loc;
        throw data_error("diff_strengths: location universes differ; only in first: [" +
                         missing_in_a + "]; only in second: [" + missing_in_b + "]");
    }
    DiffReport diff;
    diff.target_lag = a.target_lag;
    diff.variable_a = a.variables[0];
    diff.variable_b = b.variables[0];
    diff.locations = a.locations;
    diff.diffs.resize(a.locations.size());
    for (std::size_t n = 0; n < a.locations.size(); ++n) {
        const auto& va = a.strengths[n][0];
        const auto& vb = b.strengths[n][0];
        if (va && vb) diff.diffs[n] = *vb - *va;
    }
    return diff;
}

/// Mean counts by step-of-week (summed over locations first), one complete
/// cycle per variable, plus recovery percentages against a baseline
/// variable.
struct WeeklyProfile {
    std::size_t cycle_length = 0;
    std::vector<std::string> variables;
    std::vector<std::vector<double>> profiles; // [variable][step-of-week]
    std::vector<std::size_t> weeks_used;       // complete cycles per variable
    std::string baseline;
    std::vector<double> recovery_percent;      // baseline is exactly 100
};

/// `anchor_offset` is the step-of-week of the first time index (0 = Monday
/// 00:00); profile slot 0 always means Monday 00:00.
inline WeeklyProfile weekly_profile(const MobilityTensor& tensor, const std::string& baseline,
                                    std::size_t anchor_offset = 0) {
    const std::size_t cycle = 7 * steps_per_day(tensor.resolution());
    const std::size_t base_var = tensor.find_variable(baseline);
    anchor_offset %= cycle;

    WeeklyProfile profile;
    profile.cycle_length = cycle;
    profile.variables = tensor.variables();
    profile.baseline = baseline;

    for (std::size_t v = 0; v < tensor.num_variables(); ++v) {
        const std::size_t T = tensor.length(v);
        // First time step whose step-of-week is 0, 0-based.
        const std::size_t first = (cycle - anchor_offset) % cycle;
        const std::size_t weeks = T >= first ? (T - first) / cycle : 0;
        if (weeks == 0)
            throw data_error("variable '" + tensor.variables()[v] +
                             "' has no complete weekly cycle (T=" +
                             csv::format_int(static_cast<std::int64_t>(T)) + ")");
        std::vector<double> sums(cycle, 0.0);
        for (std::size_t n = 0; n < tensor.num_locations(); ++n) {
            const SeriesKey key{n, v};
            if (tensor.is_missing(key)) continue;
            const auto s = tensor.series(key);
            for (std::size_t w = 0; w < weeks; ++w)
                for (std::size_t h = 0; h < cycle; ++h)
                    sums[h] += static_cast<double>(s[first + w * cycle + h]);
        }
        for (auto& x : sums) x /= static_cast<double>(weeks);
        profile.weeks_used.push_back(weeks);
        profile.profiles.push_back(std::move(sums));
    }

    double base_total = 0.0;
    for (double x : profile.profiles[base_var]) base_total += x;
    if (base_total <= 0.0)
        throw data_error("baseline variable '" + baseline + "' has zero total volume");
    for (std::size_t v = 0; v < profile.variables.size(); ++v) {
        double total = 0.0;
        for (double x : profile.profiles[v]) total += x;
        profile.recovery_percent.push_back(100.0 * (total / base_total));
    }
    return profile;
}

/// Pairs (x_t, x_{t-k}) in time order, the raw material of lag scatter
/// plots.
inline std::vector<std::pair<std::int64_t, std::int64_t>> lag_scatter(
    std::span<const std::int64_t> series, int lag) {
    if (lag < 1) throw usage_error("lag must be >= 1");
    if (static_cast<std::size_t>(lag) >= series.size())
        throw usage_error("lag " + std::to_string(lag) + " must be smaller than series length " +
                          std::to_string(series.size()));
    std::vector<std::pair<std::int64_t, std::int64_t>> pairs;
    pairs.reserve(series.size() - static_cast<std::size_t>(lag));
    for (std::size_t t = static_cast<std::size_t>(lag); t < series.size(); ++t)
        pairs.emplace_back(series[t], series[t - static_cast<std::size_t>(lag)]);
    return pairs;
}

inline std::string lag_scatter_csv(std::span<const std::int64_t> series, int lag) {
    std::string out = "current,lagged\n";
    for (const auto& [cur, lagged] : lag_scatter(series, lag))
        out += csv::format_int(cur) + ',' + csv::format_int(lagged) + '\n';
    return out;
}

/// Mean daily totals per series; trailing partial days are dropped.
struct DailyAverage {
    std::vector<std::string> locations;
    std::vector<std::string> variables;
    std::vector<std::vector<std::optional<double>>> values; // [location][variable]
    std::vector<std::string> warnings;                      // partial-day truncations
};

inline DailyAverage daily_average(const MobilityTensor& tensor) {
    const std::size_t steps = steps_per_day(tensor.resolution());
    DailyAverage out;
    out.locations = tensor.locations();
    out.variables = tensor.variables();
    out.values.assign(tensor.num_locations(),
                      std::vector<std::optional<double>>(tensor.num_variables()));
    for (std::size_t v = 0; v < tensor.num_variables(); ++v) {
        const std::size_t T = tensor.length(v);
        const std::size_t days = T / steps;
        if (days == 0)
            throw data_error("variable '" + tensor.variables()[v] + "' shorter than one day");
        if (days * steps != T)
            out.warnings.push_back("variable '" + tensor.variables()[v] + "': dropped trailing partial day (" +
                                   csv::format_int(static_cast<std::int64_t>(T - days * steps)) +
                                   " steps)");
        for (std::size_t n = 0; n < tensor.num_locations(); ++n) {
            const SeriesKey key{n, v};
            if (tensor.is_missing(key)) continue;
            const auto s = tensor.series(key);
            double total = 0.0;
            for (std::size_t t = 0; t < days * steps; ++t) total += static_cast<double>(s[t]);
            out.values[n][v] = total / static_cast<double>(days);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline std::string to_csv(const PeriodicityReport& report) {
    std::string out = "location,variable,strength\n";
    for (std::size_t n = 0; n < report.locations.size(); ++n) {
        for (std::size_t v = 0; v < report.variables.size(); ++v) {
            out += csv::quote_field(report.locations[n]) + ',' +
                   csv::quote_field(report.variables[v]) + ',';
            if (report.strengths[n][v]) out += csv::format_double(*report.strengths[n][v]);
            out += '\n';
        }
    }
    return out;
}

inline std::string to_csv(const DiffReport& diff) {
    std::string out = "location,diff\n";
    for (std::size_t n = 0; n < diff.locations.size(); ++n) {
        out += csv::quote_field(diff.locations[n]) + ',';
        if (diff.diffs[n]) out += csv::format_double(*diff.diffs[n]);
        out += '\n';
    }
    return out;
}

inline std::string to_csv(const WeeklyProfile& profile) {
    std::string out = "variable,step_of_week,mean_count\n";
    for (std::size_t v = 0; v < profile.variables.size(); ++v)
        for (std::size_t h = 0; h < profile.cycle_length; ++h)
            out += csv::quote_field(profile.variables[v]) + ',' +
                   csv::format_int(static_cast<std::int64_t>(h)) + ',' +
                   csv::format_double(profile.profiles[v][h]) + '\n';
    return out;
}

inline std::string to_csv(const DailyAverage& daily) {
    std::string out = "location,variable,daily_average\n";
    for (std::size_t n = 0; n < daily.locations.size(); ++n) {
        for (std::size_t v = 0; v < daily.variables.size(); ++v) {
            out += csv::quote_field(daily.locations[n]) + ',' +
                   csv::quote_field(daily.variables[v]) + ',';
            if (daily.values[n][v]) out += csv::format_double(*daily.values[n][v]);
            out += '\n';
        }
    }
    return out;
}

} // namespace spar
