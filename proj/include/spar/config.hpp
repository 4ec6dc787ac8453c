#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spar/errors.hpp"

namespace spar {

/// User-facing knobs shared by the CLI subcommands.  Precedence is
/// flags > config file > these defaults.
struct SolverConfig {
    int order = 168;
    int sparsity = 4;
    std::string solver = "greedy"; // or "exact"
    std::uint64_t node_budget = 10'000'000;
    double time_budget_seconds = 0.0;
    int swap_rounds = 10;
    double kkt_rel_tol = 1e-8;
    double tie_rel_tol = 1e-12;
    double improve_rel_tol = 1e-10;
    int target_lag = 0; // 0: resolves to the order (weekly lag at d = 168)
    std::vector<double> thresholds = {0.8};
    std::uint64_t seed = 0;
    bool sort_ids = false;
    bool zero_based_time = false;
    bool parse_timestamps = false; // time column holds ISO-8601 timestamps
    std::string resolution = "1h";
    std::size_t week_anchor = 0; // step-of-week of the first time index
    int threads = 1;

    void resolve_defaults() {
        if (target_lag == 0) target_lag = order;
    }

    void validate() const {
        if (order < 1) throw usage_error("order must be >= 1");
        if (sparsity < 1) throw usage_error("sparsity must be >= 1");
        if (target_lag < 1 || target_lag > order)
            throw usage_error("target lag must satisfy 1 <= target_lag <= order");
        if (solver != "greedy" && solver != "exact")
            throw usage_error("solver must be 'greedy' or 'exact'");
        if (node_budget == 0) throw usage_error("node budget must be positive");
        if (swap_rounds < 0) throw usage_error("swap rounds must be >= 0");
        if (threads < 1) throw usage_error("threads must be >= 1");
        if (time_budget_seconds < 0) throw usage_error("time budget must be >= 0");
    }
};

} // namespace spar
