#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "spar/analytics.hpp"
#include "spar/support_select.hpp"
#include "oracles.hpp"

using spar::CoefficientField;
using spar::PeriodicityReport;
using spar::SupportSet;

namespace {

std::vector<std::int64_t> periodic(const std::vector<std::int64_t>& pattern, std::size_t T) {
    std::vector<std::int64_t> out(T);
    for (std::size_t i = 0; i < T; ++i) out[i] = pattern[i % pattern.size()];
    return out;
}

CoefficientField fitted_field(const spar::MobilityTensor& tensor, int d, const SupportSet& support) {
    return spar::fit_all(tensor, d, support);
}

} // namespace

TEST_CASE("extracted strengths are exactly the fitted coefficients") {
    std::mt19937_64 rng(6101);
    spar::MobilityTensor t = oracle::random_tensor(rng, 3, 2, {40, 44}, 0, 60);
    const int d = 7;
    SupportSet support({1, 4, 7});
    CoefficientField field = fitted_field(t, d, support);
    PeriodicityReport report = spar::extract_strengths(field, 7);

    for (const auto& rec : field.records) {
        REQUIRE(rec.status == CoefficientField::Status::ok);
        const double expected = rec.fit->coeffs[support.index_of(7)];
        // projection, not recomputation: exact equality
        CHECK(*report.strength(rec.key.location, rec.key.variable) == expected);
    }
}

TEST_CASE("strength is zero when the target lag was not selected") {
    std::mt19937_64 rng(6102);
    spar::MobilityTensor t = oracle::random_tensor(rng, 2, 1, {30}, 0, 50);
    CoefficientField field = fitted_field(t, 6, SupportSet({1, 3}));
    PeriodicityReport report = spar::extract_strengths(field, 5);
    for (std::size_t n = 0; n < 2; ++n) CHECK(*report.strength(n, 0) == 0.0);
    CHECK(report.aggregates[0].mean == 0.0);
}

TEST_CASE("target lag beyond the order is rejected") {
    std::mt19937_64 rng(6103);
    spar::MobilityTensor t = oracle::random_tensor(rng, 1, 1, {30}, 0, 50);
    CoefficientField field = fitted_field(t, 6, SupportSet({1, 3}));
    CHECK_THROWS_AS(spar::extract_strengths(field, 7), spar::usage_error);
}

TEST_CASE("aggregates: mean of present strengths and threshold counts") {
    // hand-built field: 3 locations, 1 variable, one missing
    CoefficientField field;
    field.support = SupportSet({1, 8});
    field.order = 8;
    field.locations = {"A", "B", "C"};
    field.variables = {"x"};
    auto make_fit = [&](double w8) {
        spar::SimplexFit fit;
        fit.support = field.support;
        fit.coeffs = {1.0 - w8, w8};
        return fit;
    };
    field.records.resize(3);
    field.records[0] = {{0, 0}, CoefficientField::Status::ok, "", make_fit(0.9)};
    field.records[1] = {{1, 0}, CoefficientField::Status::ok, "", make_fit(0.6)};
    field.records[2] = {{2, 0}, CoefficientField::Status::missing, "", std::nullopt};

    PeriodicityReport report = spar::extract_strengths(field, 8, {0.8, 0.5});
    CHECK_FALSE(report.strength(2, 0).has_value());
    CHECK(report.aggregates[0].present == 2);
    CHECK(report.aggregates[0].mean == Catch::Approx(0.75));
    CHECK(report.aggregates[0].count_at_least[0] == 1); // >= 0.8
    CHECK(report.aggregates[0].count_at_least[1] == 2); // >= 0.5
}

TEST_CASE("diff reports propagate absence and anticommute") {
    CoefficientField field;
    field.support = SupportSet({2});
    field.order = 2;
    field.locations = {"A", "B", "C"};
    field.variables = {"2019", "2024"};
    auto fit_with = [&](double w) {
        spar::SimplexFit fit;
        fit.support = field.support;
        fit.coeffs = {w};
        return fit;
    };
    field.records.resize(6);
    // A: 0.5 -> 0.8, B: 0.9 -> 0.4, C: missing in 2024
    field.records[0] = {{0, 0}, CoefficientField::Status::ok, "", fit_with(0.5)};
    field.records[1] = {{0, 1}, CoefficientField::Status::ok, "", fit_with(0.8)};
    field.records[2] = {{1, 0}, CoefficientField::Status::ok, "", fit_with(0.9)};
    field.records[3] = {{1, 1}, CoefficientField::Status::ok, "", fit_with(0.4)};
    field.records[4] = {{2, 0}, CoefficientField::Status::ok, "", fit_with(0.7)};
    field.records[5] = {{2, 1}, CoefficientField::Status::missing, "", std::nullopt};

    PeriodicityReport report = spar::extract_strengths(field, 2);
    PeriodicityReport a = spar::slice_variable(report, "2019");
    PeriodicityReport b = spar::slice_variable(report, "2024");

    spar::DiffReport ab = spar::diff_strengths(a, b);
    CHECK(*ab.diffs[0] == Catch::Approx(0.3));
    CHECK(*ab.diffs[1] == Catch::Approx(-0.5));
    CHECK_FALSE(ab.diffs[2].has_value());

    spar::DiffReport aa = spar::diff_strengths(a, a);
    for (const auto& v : aa.diffs) CHECK(*v == 0.0);

    spar::DiffReport ba = spar::diff_strengths(b, a);
    for (std::size_t n = 0; n < 2; ++n) CHECK(*ba.diffs[n] == Catch::Approx(-*ab.diffs[n]));

    PeriodicityReport shrunk = a;
    shrunk.locations.pop_back();
    shrunk.strengths.pop_back();
    CHECK_THROWS_MATCHES(spar::diff_strengths(shrunk, b), spar::data_error,
                         Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("C")));
}

TEST_CASE("weekly profile computes complete-cycle means and recovery") {
    // two variables, hourly: baseline at 100/hour, comparison at 68/hour
    spar::MobilityTensor t({"A", "B"}, {"2019", "2021"}, "1h");
    t.set_series({0, 0}, std::vector<std::int64_t>(336, 60));
    t.set_series({1, 0}, std::vector<std::int64_t>(336, 40));
    t.set_series({0, 1}, std::vector<std::int64_t>(336, 30));
    t.set_series({1, 1}, std::vector<std::int64_t>(336, 38));

    spar::WeeklyProfile profile = spar::weekly_profile(t, "2019");
    REQUIRE(profile.cycle_length == 168);
    CHECK(profile.weeks_used == std::vector<std::size_t>{2, 2});
    CHECK(profile.profiles[0][0] == 100.0);
    CHECK(profile.profiles[1][167] == 68.0);
    CHECK(profile.recovery_percent[0] == 100.0);
    CHECK(profile.recovery_percent[1] == Catch::Approx(68.0).epsilon(1e-12));
}

TEST_CASE("weekly profile respects the anchor offset") {
    // anchor 100: the first complete week starts at 0-based index 68
    spar::MobilityTensor t({"A"}, {"x"}, "1h");
    std::vector<std::int64_t> counts(450, 0);
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] = static_cast<std::int64_t>(i);
    t.set_series({0, 0}, counts);

    spar::WeeklyProfile profile = spar::weekly_profile(t, "x", 100);
    CHECK(profile.weeks_used[0] == 2); // (450 - 68) / 168
    CHECK(profile.profiles[0][0] == Catch::Approx((68.0 + 236.0) / 2));
    CHECK(profile.profiles[0][167] == Catch::Approx((235.0 + 403.0) / 2));
}

TEST_CASE("weekly profile needs at least one complete cycle") {
    spar::MobilityTensor t({"A"}, {"x"}, "1h");
    t.set_series({0, 0}, std::vector<std::int64_t>(100, 5));
    CHECK_THROWS_AS(spar::weekly_profile(t, "x"), spar::data_error);
}

TEST_CASE("recovery is invariant to permuting and splitting locations") {
    std::mt19937_64 rng(6104);
    auto series_a = oracle::random_counts(rng, 336, 0, 100);
    auto series_b = oracle::random_counts(rng, 336, 0, 100);
    auto series_a2 = oracle::random_counts(rng, 336, 0, 100);
    auto series_b2 = oracle::random_counts(rng, 336, 0, 100);

    spar::MobilityTensor t({"A", "B"}, {"base", "cmp"}, "1h");
    t.set_series({0, 0}, series_a);
    t.set_series({1, 0}, series_b);
    t.set_series({0, 1}, series_a2);
    t.set_series({1, 1}, series_b2);

    spar::MobilityTensor permuted({"B", "A"}, {"base", "cmp"}, "1h");
    permuted.set_series({0, 0}, series_b);
    permuted.set_series({1, 0}, series_a);
    permuted.set_series({0, 1}, series_b2);
    permuted.set_series({1, 1}, series_a2);

    // split A into two locations whose counts sum to the original
    spar::MobilityTensor split({"A1", "A2", "B"}, {"base", "cmp"}, "1h");
    auto halve = [](const std::vector<std::int64_t>& v, bool first) {
        std::vector<std::int64_t> out(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = first ? v[i] / 2 : v[i] - v[i] / 2;
        return out;
    };
    split.set_series({0, 0}, halve(series_a, true));
    split.set_series({1, 0}, halve(series_a, false));
    split.set_series({2, 0}, series_b);
    split.set_series({0, 1}, halve(series_a2, true));
    split.set_series({1, 1}, halve(series_a2, false));
    split.set_series({2, 1}, series_b2);

    const double r0 = spar::weekly_profile(t, "base").recovery_percent[1];
    CHECK(spar::weekly_profile(permuted, "base").recovery_percent[1] == r0);
    CHECK(spar::weekly_profile(split, "base").recovery_percent[1] == r0);
}

TEST_CASE("lag scatter pairs") {
    std::vector<std::int64_t> series = {1, 2, 3, 4};
    auto pairs = spar::lag_scatter(series, 1);
    REQUIRE(pairs.size() == 3);
    CHECK(pairs[0] == std::pair<std::int64_t, std::int64_t>{2, 1});
    CHECK(pairs[1] == std::pair<std::int64_t, std::int64_t>{3, 2});
    CHECK(pairs[2] == std::pair<std::int64_t, std::int64_t>{4, 3});

    // period-k series: all pairs on the diagonal
    auto per = periodic({5, 9, 4}, 30);
    for (const auto& [cur, lagged] : spar::lag_scatter(per, 3)) CHECK(cur == lagged);

    // count is T - k for every valid k
    for (int k = 1; k < 30; ++k)
        CHECK(spar::lag_scatter(per, k).size() == 30 - static_cast<std::size_t>(k));

    CHECK_THROWS_AS(spar::lag_scatter(series, 4), spar::usage_error);
    CHECK_THROWS_AS(spar::lag_scatter(series, 0), spar::usage_error);
}

TEST_CASE("daily averages with truncation warning") {
    spar::MobilityTensor t({"A", "B"}, {"x"}, "1h");
    t.set_series({0, 0}, std::vector<std::int64_t>(48, 1));
    // B missing
    spar::DailyAverage d48 = spar::daily_average(t);
    CHECK(*d48.values[0][0] == 24.0);
    CHECK_FALSE(d48.values[1][0].has_value());
    CHECK(d48.warnings.empty());

    spar::MobilityTensor t2({"A"}, {"x"}, "1h");
    t2.set_series({0, 0}, std::vector<std::int64_t>(50, 1));
    spar::DailyAverage d50 = spar::daily_average(t2);
    CHECK(*d50.values[0][0] == 24.0);
    REQUIRE(d50.warnings.size() == 1);
    CHECK_THAT(d50.warnings[0], Catch::Matchers::ContainsSubstring("partial day"));

    spar::MobilityTensor bad({"A"}, {"x"}, "2h");
    bad.set_series({0, 0}, std::vector<std::int64_t>(48, 1));
    CHECK_THROWS_AS(spar::daily_average(bad), spar::data_error);
}

TEST_CASE("30-minute resolution uses a 336-step cycle") {
    spar::MobilityTensor t({"A"}, {"x"}, "30min");
    t.set_series({0, 0}, std::vector<std::int64_t>(672, 10));
    spar::WeeklyProfile profile = spar::weekly_profile(t, "x");
    CHECK(profile.cycle_length == 336);
    CHECK(profile.weeks_used[0] == 2);
    spar::DailyAverage daily = spar::daily_average(t);
    CHECK(*daily.values[0][0] == 480.0);
}
