#include <catch2/catch_amalgamated.hpp>

#include "spar/analytics.hpp"
#include "spar/synth.hpp"
#include "oracles.hpp"

using spar::GenerateResult;
using spar::SynthSpec;

namespace {

SynthSpec base_spec() {
    SynthSpec spec;
    spec.periods = {{7, 1.0}};
    spec.locations = 2;
    spec.variables = 1;
    spec.length = 100;
    spec.order = 10;
    spec.seed = 99;
    return spec;
}

} // namespace

TEST_CASE("noiseless single-period spec generates exactly periodic series") {
    GenerateResult gen = spar::generate(base_spec());
    for (std::size_t n = 0; n < 2; ++n) {
        const auto s = gen.tensor.series({n, 0});
        for (std::size_t t = 7; t < s.size(); ++t) CHECK(s[t] == s[t - 7]);
    }
    CHECK(gen.truth == std::map<int, double>{{7, 1.0}});
    CHECK(gen.clamped == 0);
}

TEST_CASE("same seed gives bitwise-identical tensors") {
    SynthSpec spec = base_spec();
    spec.noise = SynthSpec::Noise::additive_rounded_gaussian;
    spec.sigma = 9.0;
    GenerateResult a = spar::generate(spec);
    GenerateResult b = spar::generate(spec);
    CHECK(spar::to_long_csv(a.tensor) == spar::to_long_csv(b.tensor));

    spec.seed = 100;
    GenerateResult c = spar::generate(spec);
    CHECK(spar::to_long_csv(a.tensor) != spar::to_long_csv(c.tensor));
}

TEST_CASE("noise models stay non-negative and count clamps") {
    SynthSpec spec = base_spec();
    spec.amplitude = 5.0;
    spec.noise = SynthSpec::Noise::additive_rounded_gaussian;
    spec.sigma = 50.0; // wild noise around tiny means: clamping must kick in
    GenerateResult gen = spar::generate(spec);
    CHECK(gen.clamped > 0);
    for (std::size_t n = 0; n < 2; ++n)
        for (std::int64_t x : gen.tensor.series({n, 0})) CHECK(x >= 0);

    spec.noise = SynthSpec::Noise::poisson_resample;
    GenerateResult pois = spar::generate(spec);
    CHECK(pois.clamped == 0);
    for (std::int64_t x : pois.tensor.series({0, 0})) CHECK(x >= 0);
}

TEST_CASE("spec validation") {
    SynthSpec spec = base_spec();
    spec.periods = {{7, 0.5}, {3, 0.4}};
    CHECK_THROWS_AS(spar::generate(spec), spar::usage_error); // weights sum != 1
    spec.periods = {{12, 1.0}};
    CHECK_THROWS_AS(spar::generate(spec), spar::usage_error); // period > order
    spec = base_spec();
    spec.length = 10;
    CHECK_THROWS_AS(spar::generate(spec), spar::usage_error); // length <= order
}

TEST_CASE("noiseless pipeline recovers the planted period with strength exactly 1") {
    GenerateResult gen = spar::generate(base_spec());
    spar::SelectionResult sel = spar::select_support_greedy(gen.tensor, 10, 2);
    REQUIRE(sel.support.contains(7));
    spar::CoefficientField field = spar::fit_all(gen.tensor, 10, sel.support);
    spar::PeriodicityReport report = spar::extract_strengths(field, 7);
    for (std::size_t n = 0; n < 2; ++n) CHECK(*report.strength(n, 0) == 1.0);
}

TEST_CASE("two planted periods are recovered, checked against enumeration") {
    SynthSpec spec;
    spec.periods = {{3, 0.3}, {7, 0.7}};
    spec.locations = 3;
    spec.variables = 1;
    spec.length = 120;
    spec.order = 10;
    spec.seed = 1234;
    GenerateResult gen = spar::generate(spec);

    spar::SelectionResult sel = spar::select_support_greedy(gen.tensor, spec.order, 2);
    oracle::Selection want = oracle::enumerate_selection(gen.tensor, spec.order, 2);
    CHECK(sel.support.lags() == want.support);
    // mixing templates of periods 3 and 7 gives an exact period-21 series;
    // the pair {3, 7} cannot be beaten here and the oracle confirms it
    CHECK(sel.support.contains(7));
}

TEST_CASE("poisson rate scaling drives strength toward 1") {
    SynthSpec spec = base_spec();
    spec.noise = SynthSpec::Noise::poisson_resample;
    spec.length = 300;

    std::vector<double> means;
    for (double amplitude : {20.0, 200.0, 2000.0}) {
        double total = 0.0;
        int used = 0;
        for (int seed = 0; seed < 20; ++seed) {
            spec.amplitude = amplitude;
            spec.seed = 7000 + static_cast<std::uint64_t>(seed);
            GenerateResult gen = spar::generate(spec);
            spar::SelectionResult sel = spar::select_support_greedy(gen.tensor, 10, 2);
            spar::CoefficientField field = spar::fit_all(gen.tensor, 10, sel.support);
            spar::PeriodicityReport report = spar::extract_strengths(field, 7);
            for (std::size_t n = 0; n < spec.locations; ++n) {
                if (report.strength(n, 0)) {
                    total += *report.strength(n, 0);
                    ++used;
                }
            }
        }
        REQUIRE(used > 0);
        means.push_back(total / used);
    }
    CHECK(means[0] < means[1]);
    CHECK(means[1] < means[2]);
    CHECK(means[2] > 0.95);
}

TEST_CASE("recovery study: deterministic, zero-noise cells are perfect, strength decays") {
    spar::StudyGrid grid;
    grid.base = base_spec();
    grid.base.locations = 2;
    grid.base.length = 150;
    grid.base.amplitude = 100.0;
    grid.noise_levels = {0.0, 10.0, 60.0};
    grid.seeds_per_cell = 10;
    grid.sparsity = 2;

    const auto rows = spar::recovery_study(grid, 2);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].noise_level == 0.0);
    CHECK(rows[0].recovery_rate == 1.0);
    CHECK(rows[0].mean_strength >= 0.99);
    CHECK(rows[0].mean_strength > rows[1].mean_strength);
    CHECK(rows[1].mean_strength > rows[2].mean_strength);

    const auto again = spar::recovery_study(grid, 1);
    CHECK(spar::to_csv(rows) == spar::to_csv(again)); // thread count must not matter

    spar::StudyGrid bad = grid;
    bad.noise_levels.clear();
    CHECK_THROWS_AS(spar::recovery_study(bad), spar::usage_error);
}

TEST_CASE("pure-noise baseline: strength at an unplanted lag stays low") {
    // period-1 truth plus poisson noise is i.i.d. noise around a constant;
    // lag 7 carries no structure, so its strength rarely survives selection
    SynthSpec spec;
    spec.periods = {{1, 1.0}};
    spec.locations = 1;
    spec.variables = 1;
    spec.length = 500;
    spec.order = 10;
    spec.amplitude = 50.0;
    spec.noise = SynthSpec::Noise::poisson_resample;

    double total = 0.0;
    double worst = 0.0;
    const int seeds = 30;
    for (int seed = 0; seed < seeds; ++seed) {
        spec.seed = 31000 + static_cast<std::uint64_t>(seed);
        GenerateResult gen = spar::generate(spec);
        spar::SelectionResult sel = spar::select_support_greedy(gen.tensor, 10, 2);
        spar::CoefficientField field = spar::fit_all(gen.tensor, 10, sel.support);
        spar::PeriodicityReport report = spar::extract_strengths(field, 7);
        const double s = report.strength(0, 0).value_or(0.0);
        total += s;
        worst = std::max(worst, s);
    }
    // Calibrated regression baseline: observed mean 0.117 and per-seed max
    // 0.528 over these 30 seeds.  The seed-averaged strength sits far below
    // 0.5; a single seed can cross 0.5 because a noise lag that does enter
    // the tau=2 support carries roughly uniform weight 1/tau.
    CHECK(total / seeds < 0.2);
    CHECK(worst < 0.6);
}
