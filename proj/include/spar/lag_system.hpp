#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "spar/csv.hpp"
#include "spar/errors.hpp"
#include "spar/support.hpp"

namespace spar {

/// Lagged regression view over one series: targets x_t for t = d+1..T and,
/// for every lag k in [1, d], the aligned regressor column x_{t-k}.
/// Columns are strided views into the promoted series rather than
/// materialized copies.
class LagSystem {
public:
    LagSystem(std::span<const std::int64_t> series, int order)
        : order_(order) {
        if (order < 1) throw usage_error("order must be >= 1");
        const std::int64_t T = static_cast<std::int64_t>(series.size());
        if (T <= order)
            throw data_error("series too short: T=" + csv::format_int(T) +
                             " requires T > d=" + csv::format_int(order));
        values_.reserve(series.size());
        for (std::int64_t v : series) values_.push_back(static_cast<double>(v));
    }

    LagSystem(std::vector<double> series, int order)
        : order_(order), values_(std::move(series)) {
        if (order < 1) throw usage_error("order must be >= 1");
        if (static_cast<std::int64_t>(values_.size()) <= order)
            throw data_error("series too short: T=" +
                             csv::format_int(static_cast<std::int64_t>(values_.size())) +
                             " requires T > d=" + csv::format_int(order));
    }

    int order() const { return order_; }
    std::size_t sample_count() const { return values_.size() - static_cast<std::size_t>(order_); }

    /// Target x_{d+1+i} for sample i in [0, sample_count).
    double target(std::size_t i) const { return values_[static_cast<std::size_t>(order_) + i]; }

    /// Regressor x_{d+1+i-k} for lag k in [1, d].
    double lag_value(int k, std::size_t i) const {
        return values_[static_cast<std::size_t>(order_) + i - static_cast<std::size_t>(k)];
    }

    const std::vector<double>& values() const { return values_; }

private:
    int order_;
    std::vector<double> values_;
};

inline LagSystem build_lag_system(std::span<const std::int64_t> series, int order) {
    return LagSystem(series, order);
}

/// Sum of squared one-step errors for the given support and coefficients,
/// accumulated in ascending sample order.  `coeffs` aligns with
/// support.lags().
inline double residual_sse(const LagSystem& system, const SupportSet& support,
                           std::span<const double> coeffs) {
    if (coeffs.size() != support.size())
        throw usage_error("coefficient count " + std::to_string(coeffs.size()) +
                          " does not match support size " + std::to_string(support.size()));
    if (support.max_lag() > system.order())
        throw usage_error("support lag " + std::to_string(support.max_lag()) +
                          " exceeds system order " + std::to_string(system.order()));
    const auto& lags = support.lags();
    const std::size_t m = system.sample_count();
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        double pred = 0.0;
        for (std::size_t j = 0; j < lags.size(); ++j)
            pred += coeffs[j] * system.lag_value(lags[j], i);
        const double r = system.target(i) - pred;
        acc += r * r;
    }
    return acc;
}

} // namespace spar
