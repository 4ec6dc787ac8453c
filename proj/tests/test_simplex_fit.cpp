#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <random>

#include "spar/simplex_fit.hpp"
#include "oracles.hpp"

using spar::FitOptions;
using spar::LagSystem;
using spar::SimplexFit;
using spar::SupportSet;

namespace {

LagSystem make_system(const std::vector<std::int64_t>& counts, int d) {
    return LagSystem(std::span<const std::int64_t>(counts), d);
}

/// Independent KKT certificate: active coordinates share the gradient
/// value, inactive ones sit at or above it.
void check_kkt_certificate(const std::vector<double>& series_vals, int d,
                           const SupportSet& support, const SimplexFit& fit) {
    oracle::Normal ne = oracle::normal_equations(series_vals, d, support.lags());
    Eigen::Map<const Eigen::VectorXd> w(fit.coeffs.data(),
                                        static_cast<Eigen::Index>(fit.coeffs.size()));
    Eigen::VectorXd g = 2.0 * (ne.G * w - ne.c);
    double lambda = 0.0;
    int active = 0;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        if (w(i) > 0.0) {
            lambda += g(i);
            ++active;
        }
    }
    REQUIRE(active > 0);
    lambda /= active;
    const double tol = 1e-7 * (1.0 + ne.yy);
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        if (w(i) > 0.0) {
            CHECK(std::abs(g(i) - lambda) <= tol);
        } else {
            CHECK(g(i) >= lambda - tol);
        }
    }
}

} // namespace

TEST_CASE("constant series gives the canonical uniform fit") {
    std::vector<std::int64_t> counts(60, 11);
    LagSystem sys = make_system(counts, 30);
    SimplexFit fit = spar::fit_series(sys, SupportSet({1, 24}));
    CHECK(fit.coeffs[0] == 0.5);
    CHECK(fit.coeffs[1] == 0.5);
    CHECK(fit.sse == 0.0);
}

TEST_CASE("two-lag fit matches a fine grid search") {
    std::mt19937_64 rng(4101);
    for (int trial = 0; trial < 20; ++trial) {
        auto counts = oracle::random_counts(rng, 60, 0, 100);
        std::vector<double> vals(counts.begin(), counts.end());
        const int d = 8;
        SupportSet support({1, 2});
        SimplexFit fit = spar::fit_series(make_system(counts, d), support);

        oracle::Normal ne = oracle::normal_equations(vals, d, support.lags());
        const double grid_best = oracle::grid_search_best(ne, 2, 1e-4);
        if (grid_best > 1e-9) {
            CHECK(fit.sse <= grid_best * (1.0 + 1e-6));
            CHECK(grid_best <= fit.sse * (1.0 + 1e-6) + 1e-7);
        } else {
            CHECK(fit.sse <= grid_best + 1e-9);
        }
    }
}

TEST_CASE("three-lag fits match the simplex grid and satisfy KKT") {
    std::mt19937_64 rng(4102);
    for (int trial = 0; trial < 100; ++trial) {
        const int d = 6 + static_cast<int>(rng() % 3);
        const std::size_t T = 40 + static_cast<std::size_t>(rng() % 21);
        auto counts = oracle::random_counts(rng, T, 0, 60);
        std::vector<double> vals(counts.begin(), counts.end());

        std::vector<int> lags;
        for (int k = 1; k <= d && lags.size() < 3; ++k)
            if (rng() % 2 == 0) lags.push_back(k);
        if (lags.empty()) lags.push_back(1 + static_cast<int>(rng() % d));
        SupportSet support(lags);

        SimplexFit fit = spar::fit_series(make_system(counts, d), support);
        CHECK(fit.kkt_residual <= 1e-8);
        double sum = 0.0;
        for (double w : fit.coeffs) {
            CHECK(w >= 0.0);
            sum += w;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-9);
        check_kkt_certificate(vals, d, support, fit);

        oracle::Normal ne = oracle::normal_equations(vals, d, support.lags());
        const double grid_best = oracle::grid_search_best(ne, support.size(), 1e-3);
        // grid is a feasible-point upper bound; the solver must do at least
        // as well up to the grid resolution
        CHECK(fit.sse <= grid_best + 1e-4 * (1.0 + grid_best));
        CHECK(grid_best >= fit.sse - 1e-9 * (1.0 + fit.sse));
    }
}

TEST_CASE("optimum dominates the uniform feasible point") {
    std::mt19937_64 rng(4103);
    for (int trial = 0; trial < 30; ++trial) {
        auto counts = oracle::random_counts(rng, 50, 0, 80);
        const int d = 6;
        SupportSet support({1, 3, 6});
        SimplexFit fit = spar::fit_series(make_system(counts, d), support);
        const std::vector<double> uniform(3, 1.0 / 3.0);
        const double u = spar::residual_sse(make_system(counts, d), support, uniform);
        CHECK(fit.sse <= u + 1e-9 * (1.0 + u));
    }
}

TEST_CASE("per-series scale and translation invariance of the coefficients") {
    std::mt19937_64 rng(4104);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::int64_t> counts = oracle::random_counts(rng, 45, 0, 40);
        for (auto& c : counts) c *= 2; // keep alpha = 0.5 integral
        const int d = 5;
        SupportSet support({1, 2, 5});
        SimplexFit base = spar::fit_series(make_system(counts, d), support);

        for (double alpha : {0.5, 3.0, 100.0}) {
            std::vector<std::int64_t> scaled(counts.size());
            for (std::size_t i = 0; i < counts.size(); ++i)
                scaled[i] = static_cast<std::int64_t>(std::llround(alpha * static_cast<double>(counts[i])));
            SimplexFit fit = spar::fit_series(make_system(scaled, d), support);
            for (std::size_t j = 0; j < support.size(); ++j)
                CHECK(std::abs(fit.coeffs[j] - base.coeffs[j]) <= 1e-9);
        }
        for (std::int64_t c : {std::int64_t{1}, std::int64_t{1000}}) {
            std::vector<std::int64_t> shifted(counts.size());
            for (std::size_t i = 0; i < counts.size(); ++i) shifted[i] = counts[i] + c;
            SimplexFit fit = spar::fit_series(make_system(shifted, d), support);
            for (std::size_t j = 0; j < support.size(); ++j)
                CHECK(std::abs(fit.coeffs[j] - base.coeffs[j]) <= 1e-9);
        }
    }
}

TEST_CASE("warm-started refit returns identical coefficients") {
    std::mt19937_64 rng(4105);
    for (int trial = 0; trial < 20; ++trial) {
        auto counts = oracle::random_counts(rng, 50, 0, 70);
        const int d = 7;
        SupportSet support({1, 4, 7});
        LagSystem sys = make_system(counts, d);
        SimplexFit first = spar::fit_series(sys, support);
        SimplexFit second = spar::fit_series(sys, support, {}, first.coeffs);
        CHECK(second.coeffs == first.coeffs);
    }
}

TEST_CASE("noiseless periodic series fits the vertex exactly") {
    // period-7 pattern, support includes an unrelated lag
    std::vector<std::int64_t> counts;
    const std::int64_t pattern[7] = {12, 40, 7, 33, 91, 15, 2};
    for (int i = 0; i < 70; ++i) counts.push_back(pattern[i % 7]);
    LagSystem sys = make_system(counts, 10);

    for (int other : {1, 2, 3, 5}) {
        SupportSet support = SupportSet({7}).with(other);
        SimplexFit fit = spar::fit_series(sys, support);
        const std::size_t at7 = support.index_of(7);
        CHECK(fit.coeffs[at7] == 1.0);
        CHECK(fit.coeffs[1 - at7] == 0.0);
        CHECK(fit.sse == 0.0);
    }
}

TEST_CASE("degenerate face is ridge-regularized and flagged") {
    // lag-2 and lag-4 regressors identical, but the last target breaks the
    // recurrence: the optimal face is a line, resolved to its midpoint
    std::vector<std::int64_t> counts = {5, 1, 5, 1, 5, 1, 5, 1, 5, 9};
    SimplexFit fit = spar::fit_series(make_system(counts, 4), SupportSet({2, 4}));
    CHECK(fit.regularized);
    CHECK(fit.coeffs[0] == Catch::Approx(0.5).margin(1e-9));
    CHECK(fit.coeffs[1] == Catch::Approx(0.5).margin(1e-9));
    CHECK(fit.sse == Catch::Approx(64.0).epsilon(1e-12)); // lone broken sample: (9-1)^2
}

TEST_CASE("projected-gradient fallback reaches the same optimum") {
    std::mt19937_64 rng(4108);
    for (int trial = 0; trial < 10; ++trial) {
        auto counts = oracle::random_counts(rng, 60, 0, 90);
        std::vector<double> vals(counts.begin(), counts.end());
        std::vector<int> lags = {1, 2, 3, 4};
        oracle::Normal ne = oracle::normal_equations(vals, 6, lags);

        spar::SimplexQpOptions starved;
        starved.max_active_set_iters = 1; // force the fallback path
        spar::SimplexQpResult pg = spar::solve_simplex_qp(ne.G, ne.c, ne.yy, starved);
        spar::SimplexQpResult as = spar::solve_simplex_qp(ne.G, ne.c, ne.yy);

        CHECK(pg.fallback);
        CHECK_FALSE(as.fallback);
        CHECK(pg.kkt_residual <= 1e-8);
        CHECK(pg.objective <= as.objective * (1.0 + 1e-6) + 1e-9);
        CHECK(as.objective <= pg.objective * (1.0 + 1e-6) + 1e-9);
    }
}

TEST_CASE("fit argument validation") {
    std::vector<std::int64_t> counts(20, 3);
    LagSystem sys = make_system(counts, 5);
    CHECK_THROWS_AS(spar::fit_series(sys, SupportSet{}), spar::usage_error);
    CHECK_THROWS_AS(spar::fit_series(sys, SupportSet({6})), spar::usage_error);
}

TEST_CASE("fit_all isolates failures and marks missing series") {
    std::vector<std::string> locs = {"A", "B"};
    std::vector<std::string> vars = {"long", "short"};
    spar::MobilityTensor tensor(locs, vars, "1h");
    std::mt19937_64 rng(4106);
    tensor.set_series({0, 0}, oracle::random_counts(rng, 40, 0, 30));
    tensor.set_series({1, 0}, oracle::random_counts(rng, 40, 0, 30));
    tensor.set_series({0, 1}, oracle::random_counts(rng, 4, 0, 30));
    // (B, short) never installed -> missing

    spar::CoefficientField field = spar::fit_all(tensor, 8, SupportSet({1, 8}));
    REQUIRE(field.records.size() == 4);
    CHECK(field.count(spar::CoefficientField::Status::ok) == 2);
    CHECK(field.count(spar::CoefficientField::Status::failed) == 1);
    CHECK(field.count(spar::CoefficientField::Status::missing) == 1);
    for (const auto& rec : field.records) {
        if (rec.status == spar::CoefficientField::Status::failed)
            CHECK_THAT(rec.message, Catch::Matchers::ContainsSubstring("series too short"));
    }
}

TEST_CASE("fit_all throws only when every series fails") {
    spar::MobilityTensor tensor({"A"}, {"V"}, "1h");
    tensor.set_series({0, 0}, std::vector<std::int64_t>(5, 1));
    CHECK_THROWS_AS(spar::fit_all(tensor, 10, SupportSet({1, 10})), spar::data_error);
}

TEST_CASE("coefficient field CSV round trip") {
    std::vector<std::string> locs = {"A", "B"};
    std::vector<std::string> vars = {"x"};
    spar::MobilityTensor tensor(locs, vars, "1h");
    std::mt19937_64 rng(4107);
    tensor.set_series({0, 0}, oracle::random_counts(rng, 50, 0, 99));
    // B missing

    spar::CoefficientField field = spar::fit_all(tensor, 6, SupportSet({2, 5}));
    const std::string csv = spar::to_csv(field);

    const auto path = std::filesystem::temp_directory_path() / "spar_field_roundtrip.csv";
    spar::csv::write_file_atomic(path, csv);
    spar::CoefficientField parsed = spar::coefficient_field_from_csv(path);
    std::filesystem::remove(path);

    REQUIRE(parsed.records.size() == field.records.size());
    CHECK(parsed.support == field.support);
    for (std::size_t i = 0; i < field.records.size(); ++i) {
        CHECK(parsed.records[i].status == field.records[i].status);
        if (field.records[i].status == spar::CoefficientField::Status::ok)
            CHECK(parsed.records[i].fit->coeffs == field.records[i].fit->coeffs);
    }
}
