#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "spar/analytics.hpp"
#include "spar/errors.hpp"
#include "spar/parallel.hpp"
#include "spar/rng.hpp"
#include "spar/support_select.hpp"
#include "spar/tensor.hpp"

namespace spar {

/// Recipe for a synthetic tensor with planted periodic structure.  Each
/// series draws one non-negative template per planted period and mixes them
/// with simplex weights; noise is applied per sample.
struct SynthSpec {
    struct Component {
        int period = 0;
        double weight = 0.0;
    };
    enum class Noise { none, poisson_resample, additive_rounded_gaussian };

    std::vector<Component> periods;
    Noise noise = Noise::none;
    double sigma = 0.0;  // gaussian only
    std::uint64_t seed = 0;
    std::size_t locations = 1;
    std::size_t variables = 1;
    std::size_t length = 0;
    int order = 1;
    double amplitude = 100.0; // template values are integers in [0, amplitude]
    std::string resolution = "1h";
};

inline SynthSpec::Noise noise_from_string(const std::string& s) {
    if (s == "none") return SynthSpec::Noise::none;
    if (s == "poisson-resample") return SynthSpec::Noise::poisson_resample;
    if (s == "additive-rounded-gaussian") return SynthSpec::Noise::additive_rounded_gaussian;
    throw usage_error("unknown noise model '" + s + "'");
}

inline std::string to_string(SynthSpec::Noise n) {
    switch (n) {
        case SynthSpec::Noise::none: return "none";
        case SynthSpec::Noise::poisson_resample: return "poisson-resample";
        case SynthSpec::Noise::additive_rounded_gaussian: return "additive-rounded-gaussian";
    }
    return "unknown";
}

struct GenerateResult {
    MobilityTensor tensor;
    std::map<int, double> truth; // planted mixing weight per lag
    std::size_t clamped = 0;     // negative post-noise values clamped to 0
};

inline void validate(const SynthSpec& spec) {
    if (spec.periods.empty()) throw usage_error("synth spec needs at least one period");
    double total = 0.0;
    for (const auto& p : spec.periods) {
        if (p.period < 1) throw usage_error("planted periods must be >= 1");
        if (p.period > spec.order)
            throw usage_error("planted period " + std::to_string(p.period) +
                              " exceeds order " + std::to_string(spec.order));
        if (p.weight < 0.0) throw usage_error("mixing weights must be non-negative");
        total += p.weight;
    }
    if (std::abs(total - 1.0) > 1e-9) throw usage_error("mixing weights must sum to 1");
    if (spec.length <= static_cast<std::size_t>(spec.order))
        throw usage_error("length must exceed order");
    if (spec.locations == 0 || spec.variables == 0)
        throw usage_error("locations and variables must be positive");
    if (spec.amplitude <= 0.0) throw usage_error("amplitude must be positive");
    if (spec.sigma < 0.0) throw usage_error("sigma must be non-negative");
}

/// Deterministic given the seed: series (n, v) uses the SplitMix64 stream
/// derived from seed and the series ordinal n * variables + v.
inline GenerateResult generate(const SynthSpec& spec) {
    validate(spec);
    std::vector<std::string> locations, variables;
    for (std::size_t n = 0; n < spec.locations; ++n) locations.push_back("L" + std::to_string(n + 1));
    for (std::size_t v = 0; v < spec.variables; ++v) variables.push_back("V" + std::to_string(v + 1));

    GenerateResult out;
    out.tensor = MobilityTensor(std::move(locations), std::move(variables), spec.resolution);
    for (const auto& p : spec.periods) out.truth[p.period] = p.weight;

    for (std::size_t n = 0; n < spec.locations; ++n) {
        for (std::size_t v = 0; v < spec.variables; ++v) {
            SplitMix64 rng = series_stream(spec.seed, n * spec.variables + v);
            std::vector<std::vector<double>> templates;
            for (const auto& p : spec.periods) {
                std::vector<double> tpl(static_cast<std::size_t>(p.period));
                for (auto& x : tpl)
                    x = static_cast<double>(rng.next_below(static_cast<std::uint64_t>(spec.amplitude) + 1));
                templates.push_back(std::move(tpl));
            }
            std::vector<std::int64_t> counts(spec.length);
            for (std::size_t t = 0; t < spec.length; ++t) {
                double clean = 0.0;
                for (std::size_t p = 0; p < spec.periods.size(); ++p)
                    clean += spec.periods[p].weight *
                             templates[p][t % static_cast<std::size_t>(spec.periods[p].period)];
                std::int64_t value = 0;
                switch (spec.noise) {
                    case SynthSpec::Noise::none:
                        value = static_cast<std::int64_t>(std::llround(clean));
                        break;
                    case SynthSpec::Noise::poisson_resample:
                        value = rng.next_poisson(clean);
                        break;
                    case SynthSpec::Noise::additive_rounded_gaussian:
                        value = static_cast<std::int64_t>(
                            std::llround(clean + spec.sigma * rng.next_normal()));
                        break;
                }
                if (value < 0) {
                    value = 0;
                    ++out.clamped;
                }
                counts[t] = value;
            }
            out.tensor.set_series({n, v}, std::move(counts));
        }
    }
    return out;
}

/// One recovery-study grid: the base spec swept over noise levels, several
/// seeds per cell, full pipeline (select -> fit -> extract) per run.
struct StudyGrid {
    SynthSpec base;
    std::string noise_parameter = "sigma"; // "sigma" or "amplitude-scale"
    std::vector<double> noise_levels;
    int seeds_per_cell = 20;
    std::uint64_t first_seed = 1;
    int sparsity = 2;
    int target_lag = 0; // 0: largest planted period
};

struct StudyRow {
    double noise_level = 0.0;
    double recovery_rate = 0.0; // fraction of seeds whose support covers all planted lags
    double mean_strength = 0.0; // mean over seeds of per-tensor mean strength at target
    int failed_cells = 0;
};

inline std::vector<StudyRow> recovery_study(const StudyGrid& grid, int threads = 1) {
    if (grid.noise_levels.empty()) throw usage_error("study grid needs noise levels");
    if (grid.seeds_per_cell < 1) throw usage_error("seeds_per_cell must be >= 1");
    validate(grid.base);
    int target = grid.target_lag;
    if (target == 0)
        for (const auto& p : grid.base.periods) target = std::max(target, p.period);

    std::vector<StudyRow> rows(grid.noise_levels.size());
    parallel_for(rows.size(), threads, [&](std::size_t cell) {
        const double level = grid.noise_levels[cell];
        StudyRow row;
        row.noise_level = level;
        double strength_sum = 0.0;
        int recovered = 0, ok = 0;
        for (int s = 0; s < grid.seeds_per_cell; ++s) {
            SynthSpec spec = grid.base;
            spec.seed = grid.first_seed + static_cast<std::uint64_t>(cell) * 1000003ULL +
                        static_cast<std::uint64_t>(s);
            if (grid.noise_parameter == "sigma") {
                spec.noise = level > 0.0 ? SynthSpec::Noise::additive_rounded_gaussian
                                         : SynthSpec::Noise::none;
                spec.sigma = level;
            } else if (grid.noise_parameter == "amplitude-scale") {
                spec.noise = SynthSpec::Noise::poisson_resample;
                spec.amplitude = grid.base.amplitude * level;
            } else {
                throw usage_error("unknown noise parameter '" + grid.noise_parameter + "'");
            }
            try {
                GenerateResult gen = generate(spec);
                SelectOptions sel;
                SelectionResult selection =
                    select_support_greedy(gen.tensor, spec.order, grid.sparsity, sel);
                bool covers = true;
                for (const auto& p : spec.periods)
                    if (!selection.support.contains(p.period)) covers = false;
                if (covers) ++recovered;
                CoefficientField field = fit_all(gen.tensor, spec.order, selection.support);
                PeriodicityReport report = extract_strengths(field, target);
                double sum = 0.0;
                std::size_t count = 0;
                for (const auto& col : report.strengths)
                    for (const auto& cellv : col)
                        if (cellv) {
                            sum += *cellv;
                            ++count;
                        }
                if (count > 0) {
                    strength_sum += sum / static_cast<double>(count);
                    ++ok;
                }
            } catch (const error&) {
                ++row.failed_cells;
            }
        }
        row.recovery_rate = static_cast<double>(recovered) / static_cast<double>(grid.seeds_per_cell);
        row.mean_strength = ok > 0 ? strength_sum / static_cast<double>(ok)
                                   : std::numeric_limits<double>::quiet_NaN();
        rows[cell] = row;
    });

    std::sort(rows.begin(), rows.end(),
              [](const StudyRow& a, const StudyRow& b) { return a.noise_level < b.noise_level; });
    return rows;
}

inline std::string to_csv(const std::vector<StudyRow>& rows) {
    std::string out = "noise_level,recovery_rate,mean_strength,failed_cells\n";
    for (const auto& r : rows)
        out += csv::format_double(r.noise_level) + ',' + csv::format_double(r.recovery_rate) +
               ',' + csv::format_double(r.mean_strength) + ',' +
               csv::format_int(r.failed_cells) + '\n';
    return out;
}

} // namespace spar
