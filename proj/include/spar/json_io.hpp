#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "spar/analytics.hpp"
#include "spar/config.hpp"
#include "spar/csv.hpp"
#include "spar/errors.hpp"
#include "spar/support_select.hpp"
#include "spar/synth.hpp"

namespace spar {

using json = nlohmann::json;

// The parallelism degree is deliberately absent from the echo: outputs are
// byte-identical across thread counts and the echo must not break that.
inline json to_json(const SolverConfig& config) {
    json thresholds = json::array();
    for (double t : config.thresholds) thresholds.push_back(t);
    return json{{"order", config.order},
                {"sparsity", config.sparsity},
                {"solver", config.solver},
                {"node_budget", config.node_budget},
                {"time_budget_seconds", config.time_budget_seconds},
                {"swap_rounds", config.swap_rounds},
                {"kkt_rel_tol", config.kkt_rel_tol},
                {"tie_rel_tol", config.tie_rel_tol},
                {"improve_rel_tol", config.improve_rel_tol},
                {"target_lag", config.target_lag},
                {"thresholds", thresholds},
                {"seed", config.seed},
                {"sort_ids", config.sort_ids},
                {"zero_based_time", config.zero_based_time},
                {"parse_timestamps", config.parse_timestamps},
                {"resolution", config.resolution},
                {"week_anchor", config.week_anchor}};
}

inline void apply_json(SolverConfig& config, const json& j) {
    auto get = [&](const char* key, auto& slot) {
        if (!j.contains(key)) return;
        try {
            slot = j.at(key).get<std::decay_t<decltype(slot)>>();
        } catch (const json::exception& e) {
            throw usage_error("bad config value for '" + std::string(key) + "': " + e.what());
        }
    };
    get("order", config.order);
    get("sparsity", config.sparsity);
    get("solver", config.solver);
    get("node_budget", config.node_budget);
    get("time_budget_seconds", config.time_budget_seconds);
    get("swap_rounds", config.swap_rounds);
    get("kkt_rel_tol", config.kkt_rel_tol);
    get("tie_rel_tol", config.tie_rel_tol);
    get("improve_rel_tol", config.improve_rel_tol);
    get("target_lag", config.target_lag);
    get("thresholds", config.thresholds);
    get("seed", config.seed);
    get("sort_ids", config.sort_ids);
    get("zero_based_time", config.zero_based_time);
    get("parse_timestamps", config.parse_timestamps);
    get("resolution", config.resolution);
    get("week_anchor", config.week_anchor);
    get("threads", config.threads);
}

inline json load_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open file: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw data_error("bad JSON in " + path.string() + ": " + e.what());
    }
    return j;
}

inline void write_json_atomic(const std::filesystem::path& path, const json& j) {
    csv::write_file_atomic(path, j.dump(2) + "\n");
}

inline json to_json(const SelectionResult& result, const SolverConfig& config) {
    json coeffs = json::object();
    for (std::size_t i = 0; i < result.support.size(); ++i)
        coeffs[csv::format_int(result.support.lags()[i])] = result.coefficients[i];
    return json{{"support", result.support.lags()},
                {"coefficients", coeffs},
                {"objective", result.objective},
                {"optimality", to_string(result.optimality)},
                {"solver", result.solver},
                {"series_used", result.series_used},
                {"series_skipped", result.series_skipped},
                {"nodes_explored", result.nodes_explored},
                {"stopped_early", result.stopped_early},
                {"regularized", result.regularized},
                {"fallback", result.fallback},
                {"config", to_json(config)}};
}

inline std::string trace_csv(const SelectionResult& result) {
    std::string out = "iteration,candidate,objective\n";
    for (const auto& entry : result.trace) {
        std::string lags;
        for (std::size_t i = 0; i < entry.candidate.size(); ++i) {
            if (i) lags += '+';
            lags += csv::format_int(entry.candidate.lags()[i]);
        }
        out += csv::format_int(static_cast<std::int64_t>(entry.iteration)) + ',' + lags + ',' +
               csv::format_double(entry.objective) + '\n';
    }
    return out;
}

struct LoadedSupport {
    SupportSet support;
    int order = 0; // 0 when the file does not carry one
};

/// Reads either a full selection JSON (support + config echo) or a bare
/// {"support": [...]} object.
inline LoadedSupport support_from_json_file(const std::filesystem::path& path) {
    json j = load_json_file(path);
    if (!j.contains("support") || !j.at("support").is_array() || j.at("support").empty())
        throw data_error("no support set in " + path.string());
    try {
        LoadedSupport out;
        std::vector<int> lags;
        for (const auto& v : j.at("support")) lags.push_back(v.get<int>());
        out.support = SupportSet(std::move(lags));
        if (j.contains("config") && j.at("config").contains("order"))
            out.order = j.at("config").at("order").get<int>();
        return out;
    } catch (const json::exception& e) {
        throw data_error("bad support set in " + path.string() + ": " + e.what());
    } catch (const usage_error& e) {
        throw data_error("bad support set in " + path.string() + ": " + e.what());
    }
}

inline json to_json(const PeriodicityReport& report, const SolverConfig& config) {
    json aggregates = json::object();
    for (std::size_t v = 0; v < report.variables.size(); ++v) {
        const auto& agg = report.aggregates[v];
        json counts = json::object();
        for (std::size_t t = 0; t < report.thresholds.size(); ++t)
            counts[csv::format_double(report.thresholds[t])] = agg.count_at_least[t];
        aggregates[report.variables[v]] = json{
            {"present", agg.present},
            {"mean", agg.present > 0 ? json(agg.mean) : json(nullptr)},
            {"count_at_least", counts}};
    }
    json strengths = json::object();
    for (std::size_t n = 0; n < report.locations.size(); ++n) {
        json row = json::object();
        for (std::size_t v = 0; v < report.variables.size(); ++v)
            row[report.variables[v]] =
                report.strengths[n][v] ? json(*report.strengths[n][v]) : json(nullptr);
        strengths[report.locations[n]] = row;
    }
    return json{{"target_lag", report.target_lag},
                {"support", report.support_used.lags()},
                {"thresholds", report.thresholds},
                {"aggregates", aggregates},
                {"strengths", strengths},
                {"config", to_json(config)}};
}

inline SynthSpec synth_spec_from_json(const json& j) {
    SynthSpec spec;
    if (!j.contains("periods") || !j.at("periods").is_array())
        throw usage_error("synth spec needs a 'periods' array");
    try {
        for (const auto& p : j.at("periods")) {
            SynthSpec::Component comp;
            comp.period = p.at("period").get<int>();
            comp.weight = p.at("weight").get<double>();
            spec.periods.push_back(comp);
        }
        if (j.contains("noise")) {
            const auto& n = j.at("noise");
            spec.noise = noise_from_string(n.value("model", "none"));
            spec.sigma = n.value("sigma", 0.0);
        }
        const auto& shape = j.at("shape");
        spec.locations = shape.at("locations").get<std::size_t>();
        spec.variables = shape.at("variables").get<std::size_t>();
        spec.length = shape.at("length").get<std::size_t>();
        spec.order = shape.at("order").get<int>();
        spec.seed = j.value("seed", 0ULL);
        spec.amplitude = j.value("amplitude", 100.0);
        spec.resolution = j.value("resolution", std::string("1h"));
    } catch (const json::exception& e) {
        throw usage_error(std::string("bad synth spec: ") + e.what());
    }
    validate(spec);
    return spec;
}

inline json to_json(const SynthSpec& spec) {
    json periods = json::array();
    for (const auto& p : spec.periods)
        periods.push_back(json{{"period", p.period}, {"weight", p.weight}});
    return json{{"periods", periods},
                {"noise", json{{"model", to_string(spec.noise)}, {"sigma", spec.sigma}}},
                {"shape", json{{"locations", spec.locations},
                               {"variables", spec.variables},
                               {"length", spec.length},
                               {"order", spec.order}}},
                {"seed", spec.seed},
                {"amplitude", spec.amplitude},
                {"resolution", spec.resolution}};
}

inline StudyGrid study_grid_from_json(const json& j) {
    StudyGrid grid;
    if (!j.contains("base")) throw usage_error("study grid needs a 'base' synth spec");
    grid.base = synth_spec_from_json(j.at("base"));
    if (!j.contains("noise_levels") || !j.at("noise_levels").is_array())
        throw usage_error("study grid needs a 'noise_levels' array");
    try {
        grid.noise_parameter = j.value("noise_parameter", std::string("sigma"));
        for (const auto& v : j.at("noise_levels")) grid.noise_levels.push_back(v.get<double>());
        grid.seeds_per_cell = j.value("seeds_per_cell", 20);
        grid.first_seed = j.value("first_seed", 1ULL);
        grid.sparsity = j.value("sparsity", 2);
        grid.target_lag = j.value("target_lag", 0);
    } catch (const json::exception& e) {
        throw usage_error(std::string("bad study grid: ") + e.what());
    }
    return grid;
}

} // namespace spar
