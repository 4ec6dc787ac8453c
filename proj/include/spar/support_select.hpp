#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spar/errors.hpp"
#include "spar/parallel.hpp"
#include "spar/simplex_qp.hpp"
#include "spar/simplex_fit.hpp"
#include "spar/support.hpp"
#include "spar/tensor.hpp"

namespace spar {

/// Pooled normal equations over every usable series of a tensor at a fixed
/// order: G[j,k] = sum over series and samples of x_{t-j} x_{t-k}, computed
/// lazily per entry.  Sums run in ascending (location, variable, time)
/// order regardless of thread count, so entries are bitwise reproducible.
class PooledGram {
public:
    PooledGram(const MobilityTensor& tensor, int order, int threads = 1)
        : tensor_(&tensor), order_(order), threads_(threads) {
        if (order < 1) throw usage_error("order must be >= 1");
        for (std::size_t n = 0; n < tensor.num_locations(); ++n) {
            for (std::size_t v = 0; v < tensor.num_variables(); ++v) {
                const SeriesKey key{n, v};
                if (tensor.is_missing(key)) continue;
                if (tensor.length(v) > static_cast<std::size_t>(order)) usable_.push_back(key);
                else ++skipped_;
            }
        }
        entries_.assign(static_cast<std::size_t>(order) * order,
                        std::numeric_limits<double>::quiet_NaN());
        rhs_.assign(order, std::numeric_limits<double>::quiet_NaN());
        yy_ = 0.0;
        for (const auto& key : usable_) {
            const auto s = tensor.series(key);
            for (std::size_t t = static_cast<std::size_t>(order); t < s.size(); ++t) {
                const double y = static_cast<double>(s[t]);
                yy_ += y * y;
            }
        }
    }

    int order() const { return order_; }
    double yy() const { return yy_; }
    std::size_t series_used() const { return usable_.size(); }
    std::size_t series_skipped() const { return skipped_; }
    const std::vector<SeriesKey>& usable() const { return usable_; }

    double entry(int j, int k) {
        double& slot = entries_[index(j, k)];
        if (std::isnan(slot)) {
            const double v = compute_entry(j, k);
            slot = v;
            entries_[index(k, j)] = v;
        }
        return slot;
    }

    double rhs(int k) {
        double& slot = rhs_[static_cast<std::size_t>(k - 1)];
        if (std::isnan(slot)) slot = compute_rhs(k);
        return slot;
    }

    /// Batch-compute missing entries in parallel.  Each entry is summed
    /// sequentially by one worker, so values do not depend on the split.
    void prefetch(const std::vector<std::pair<int, int>>& pairs, const std::vector<int>& rhs_lags) {
        std::vector<std::pair<int, int>> need;
        for (auto [j, k] : pairs)
            if (std::isnan(entries_[index(j, k)])) need.emplace_back(j, k);
        std::vector<int> need_rhs;
        for (int k : rhs_lags)
            if (std::isnan(rhs_[static_cast<std::size_t>(k - 1)])) need_rhs.push_back(k);

        parallel_for(need.size() + need_rhs.size(), threads_, [&](std::size_t i) {
            if (i < need.size()) {
                auto [j, k] = need[i];
                const double v = compute_entry(j, k);
                entries_[index(j, k)] = v;
                entries_[index(k, j)] = v;
            } else {
                const int k = need_rhs[i - need.size()];
                rhs_[static_cast<std::size_t>(k - 1)] = compute_rhs(k);
            }
        });
    }

    /// Assemble the normal equations restricted to a support.
    void load(const SupportSet& support, Eigen::MatrixXd& G, Eigen::VectorXd& c) {
        const auto& lags = support.lags();
        const Eigen::Index q = static_cast<Eigen::Index>(lags.size());
        std::vector<std::pair<int, int>> pairs;
        for (Eigen::Index a = 0; a < q; ++a)
            for (Eigen::Index b = a; b < q; ++b) pairs.emplace_back(lags[a], lags[b]);
        prefetch(pairs, lags);
        G.resize(q, q);
        c.resize(q);
        for (Eigen::Index a = 0; a < q; ++a) {
            c(a) = rhs(lags[a]);
            for (Eigen::Index b = 0; b < q; ++b) G(a, b) = entry(lags[a], lags[b]);
        }
    }

    /// Pooled residual SSE at the given coefficients, computed directly from
    /// the series (not through the Gram form) in canonical order.
    double direct_sse(const SupportSet& support, std::span<const double> coeffs) const {
        const auto& lags = support.lags();
        double acc = 0.0;
        for (const auto& key : usable_) {
            const auto s = tensor_->series(key);
            for (std::size_t t = static_cast<std::size_t>(order_); t < s.size(); ++t) {
                double pred = 0.0;
                for (std::size_t a = 0; a < lags.size(); ++a)
                    pred += coeffs[a] * static_cast<double>(s[t - static_cast<std::size_t>(lags[a])]);
                const double r = static_cast<double>(s[t]) - pred;
                acc += r * r;
            }
        }
        return acc;
    }

private:
    std::size_t index(int j, int k) const {
        return static_cast<std::size_t>(j - 1) * static_cast<std::size_t>(order_) +
               static_cast<std::size_t>(k - 1);
    }

    double compute_entry(int j, int k) const {
        double acc = 0.0;
        for (const auto& key : usable_) {
            const auto s = tensor_->series(key);
            const std::size_t oj = static_cast<std::size_t>(j), ok = static_cast<std::size_t>(k);
            for (std::size_t t = static_cast<std::size_t>(order_); t < s.size(); ++t)
                acc += static_cast<double>(s[t - oj]) * static_cast<double>(s[t - ok]);
        }
        return acc;
    }

    double compute_rhs(int k) const {
        double acc = 0.0;
        for (const auto& key : usable_) {
            const auto s = tensor_->series(key);
            const std::size_t ok = static_cast<std::size_t>(k);
            for (std::size_t t = static_cast<std::size_t>(order_); t < s.size(); ++t)
                acc += static_cast<double>(s[t]) * static_cast<double>(s[t - ok]);
        }
        return acc;
    }

    const MobilityTensor* tensor_;
    int order_;
    int threads_;
    std::vector<SeriesKey> usable_;
    std::size_t skipped_ = 0;
    std::vector<double> entries_; // order x order, NaN = not yet computed
    std::vector<double> rhs_;
    double yy_ = 0.0;
};

enum class Optimality { exact, heuristic, budget_exhausted };

inline std::string to_string(Optimality o) {
    switch (o) {
        case Optimality::exact: return "exact";
        case Optimality::heuristic: return "heuristic";
        case Optimality::budget_exhausted: return "budget-exhausted";
    }
    return "unknown";
}

struct TraceEntry {
    std::size_t iteration = 0;
    SupportSet candidate;
    double objective = 0.0;
};

struct SelectionResult {
    SupportSet support;
    std::vector<double> coefficients; // shared, aligned with support.lags()
    double objective = 0.0;           // pooled direct SSE at the coefficients
    Optimality optimality = Optimality::heuristic;
    std::string solver;
    std::size_t series_used = 0;
    std::size_t series_skipped = 0;
    std::uint64_t nodes_explored = 0;
    bool stopped_early = false;       // greedy used fewer than tau slots
    bool regularized = false;
    bool fallback = false;
    std::vector<TraceEntry> trace;
};

struct SelectOptions {
    std::uint64_t node_budget = 10'000'000;
    double time_budget_seconds = 0.0; // 0: no wall-clock limit
    int swap_rounds = 10;
    double tie_rel_tol = 1e-12;       // objectives closer than this are ties
    double improve_rel_tol = 1e-10;   // greedy add/swap must beat this margin
    FitOptions fit;
    int threads = 1;
    bool collect_trace = false;
};

namespace detail {

struct GramQp {
    PooledGram* gram;
    SimplexQpOptions qp;

    SimplexQpResult solve(const SupportSet& support, std::span<const double> warm = {}) {
        Eigen::MatrixXd G;
        Eigen::VectorXd c;
        gram->load(support, G, c);
        return solve_simplex_qp(G, c, gram->yy(), qp, warm);
    }
};

/// Strictly-better comparison with a relative tie zone: candidates within
/// tie_rel_tol of the incumbent are considered equal, and the incumbent
/// (found earlier, hence lexicographically smaller) wins.
inline bool strictly_better(double candidate, double incumbent, double tie_rel_tol) {
    if (!std::isfinite(incumbent)) return candidate < incumbent;
    return candidate < incumbent - tie_rel_tol * std::abs(incumbent);
}

} // namespace detail

/// Shared simplex-constrained fit over all usable series for a fixed
/// support.  Returns the shared coefficients alongside the pooled SSE.
struct EvaluationResult {
    std::vector<double> coefficients;
    double objective = 0.0;
    bool regularized = false;
    bool fallback = false;
};

inline EvaluationResult evaluate_support(PooledGram& gram, const SupportSet& support,
                                         const FitOptions& options = {}) {
    if (support.empty()) throw usage_error("empty support");
    if (support.max_lag() > gram.order())
        throw usage_error("support lag " + std::to_string(support.max_lag()) +
                          " exceeds order " + std::to_string(gram.order()));
    if (gram.series_used() == 0) throw data_error("no usable series (all missing or too short)");
    detail::GramQp qp{&gram, SimplexQpOptions{options.kkt_rel_tol, options.ridge_factor, 0,
                                              options.max_pg_iters}};
    SimplexQpResult sol = qp.solve(support);
    EvaluationResult out;
    out.objective = gram.direct_sse(support, sol.weights);
    out.coefficients = std::move(sol.weights);
    out.regularized = sol.regularized;
    out.fallback = sol.fallback;
    return out;
}

inline EvaluationResult evaluate_support(const MobilityTensor& tensor, int order,
                                         const SupportSet& support, const FitOptions& options = {},
                                         int threads = 1) {
    PooledGram gram(tensor, order, threads);
    return evaluate_support(gram, support, options);
}

/// Exact support selection by depth-first branch and bound over supports in
/// list-lexicographic order.  A node's lower bound is the simplex fit on
/// the node's prefix joined with every lag still open in that branch; any
/// completion is a restriction of that relaxation, so the bound is valid.
/// Enumeration order plus the tie zone make the first optimum found the
/// lexicographically smallest one.
inline SelectionResult select_support_exact(const MobilityTensor& tensor, int order, int sparsity,
                                            const SelectOptions& options = {}) {
    if (sparsity < 1) throw usage_error("sparsity must be >= 1");
    PooledGram gram(tensor, order, options.threads);
    if (gram.series_used() == 0) throw data_error("no usable series (all missing or too short)");

    // Everything the search touches lives inside the full Gram; fetch it in
    // one parallel pass rather than entry by entry.
    {
        std::vector<std::pair<int, int>> all;
        std::vector<int> lags(order);
        for (int k = 1; k <= order; ++k) {
            lags[static_cast<std::size_t>(k - 1)] = k;
            for (int j = 1; j <= k; ++j) all.emplace_back(j, k);
        }
        gram.prefetch(all, lags);
    }

    detail::GramQp qp{&gram, SimplexQpOptions{options.fit.kkt_rel_tol, options.fit.ridge_factor,
                                              0, options.fit.max_pg_iters}};

    SelectionResult result;
    result.solver = "exact";
    result.series_used = gram.series_used();
    result.series_skipped = gram.series_skipped();

    double best_obj = std::numeric_limits<double>::infinity();
    SupportSet best_support;
    std::vector<double> best_weights;
    bool best_regularized = false, best_fallback = false;

    std::uint64_t nodes = 0;
    bool exhausted = false;
    const auto start = std::chrono::steady_clock::now();
    auto out_of_budget = [&] {
        if (nodes >= options.node_budget) return true;
        if (options.time_budget_seconds > 0.0) {
            const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
            if (elapsed.count() >= options.time_budget_seconds) return true;
        }
        return false;
    };

    std::vector<int> prefix;
    auto dfs = [&](auto&& self, int next_start) -> void {
        if (exhausted) return;
        for (int k = next_start; k <= order; ++k) {
            if (out_of_budget()) {
                exhausted = true;
                return;
            }
            prefix.push_back(k);
            ++nodes;
            SupportSet node_support(prefix);
            SimplexQpResult sol = qp.solve(node_support);
            if (options.collect_trace)
                result.trace.push_back({nodes, node_support, sol.objective});
            if (detail::strictly_better(sol.objective, best_obj, options.tie_rel_tol)) {
                best_obj = sol.objective;
                best_support = node_support;
                best_weights = sol.weights;
                best_regularized = sol.regularized;
                best_fallback = sol.fallback;
            }
            if (static_cast<int>(prefix.size()) < sparsity && k < order) {
                // Relaxation over the open branch: prefix plus all lags > k.
                std::vector<int> relaxed = prefix;
                for (int r = k + 1; r <= order; ++r) relaxed.push_back(r);
                SimplexQpResult bound = qp.solve(SupportSet(relaxed));
                if (detail::strictly_better(bound.objective, best_obj, options.tie_rel_tol))
                    self(self, k + 1);
            }
            prefix.pop_back();
        }
    };
    dfs(dfs, 1);

    if (best_support.empty())
        throw solver_error("budget exhausted before any support was evaluated");

    result.support = best_support;
    result.coefficients = best_weights;
    result.objective = gram.direct_sse(best_support, best_weights);
    result.optimality = exhausted ? Optimality::budget_exhausted : Optimality::exact;
    result.nodes_explored = nodes;
    result.regularized = best_regularized;
    result.fallback = best_fallback;
    return result;
}

/// Greedy forward selection with swap local search.  Scalable surrogate for
/// the exact solver: adds the lag whose inclusion most reduces the pooled
/// SSE, stops early when no addition clears the improvement margin, then
/// tries member-for-nonmember swaps.  The objective never increases.
inline SelectionResult select_support_greedy(const MobilityTensor& tensor, int order, int sparsity,
                                             const SelectOptions& options = {}) {
    if (sparsity < 1) throw usage_error("sparsity must be >= 1");
    PooledGram gram(tensor, order, options.threads);
    if (gram.series_used() == 0) throw data_error("no usable series (all missing or too short)");

    detail::GramQp qp{&gram, SimplexQpOptions{options.fit.kkt_rel_tol, options.fit.ridge_factor,
                                              0, options.fit.max_pg_iters}};

    SelectionResult result;
    result.solver = "greedy";
    result.series_used = gram.series_used();
    result.series_skipped = gram.series_skipped();

    auto improves = [&](double candidate, double incumbent) {
        return candidate < incumbent * (1.0 - options.improve_rel_tol);
    };

    std::vector<int> current;
    double current_obj = std::numeric_limits<double>::infinity();
    std::size_t iteration = 0;

    // Forward passes.  Prefetch the entries each pass will need (candidate
    // diagonal + cross terms against the current members) in parallel.
    while (static_cast<int>(current.size()) < sparsity) {
        {
            std::vector<std::pair<int, int>> pairs;
            std::vector<int> rhs_lags;
            for (int k = 1; k <= order; ++k) {
                rhs_lags.push_back(k);
                pairs.emplace_back(k, k);
                for (int s : current) pairs.emplace_back(std::min(s, k), std::max(s, k));
            }
            gram.prefetch(pairs, rhs_lags);
        }
        int best_lag = -1;
        double best_obj = std::numeric_limits<double>::infinity();
        for (int k = 1; k <= order; ++k) {
            if (std::find(current.begin(), current.end(), k) != current.end()) continue;
            std::vector<int> trial = current;
            trial.push_back(k);
            SupportSet trial_support(trial);
            SimplexQpResult sol = qp.solve(trial_support);
            ++iteration;
            if (options.collect_trace)
                result.trace.push_back({iteration, trial_support, sol.objective});
            if (sol.objective < best_obj) {
                best_obj = sol.objective;
                best_lag = k;
            }
        }
        if (best_lag < 0) break;
        if (!current.empty() && !improves(best_obj, current_obj)) {
            result.stopped_early = true;
            break;
        }
        current.push_back(best_lag);
        std::sort(current.begin(), current.end());
        current_obj = best_obj;
    }

    // Swap local search: one best improving swap per round.
    for (int round = 0; round < options.swap_rounds; ++round) {
        int best_out = -1, best_in = -1;
        double best_obj = current_obj;
        SupportSet best_candidate;
        for (int out : current) {
            for (int in = 1; in <= order; ++in) {
                if (std::find(current.begin(), current.end(), in) != current.end()) continue;
                std::vector<int> trial;
                for (int s : current)
                    if (s != out) trial.push_back(s);
                trial.push_back(in);
                SupportSet trial_support(trial);
                SimplexQpResult sol = qp.solve(trial_support);
                ++iteration;
                if (options.collect_trace)
                    result.trace.push_back({iteration, trial_support, sol.objective});
                const bool wins =
                    improves(sol.objective, current_obj) &&
                    (best_out < 0 ||
                     detail::strictly_better(sol.objective, best_obj, options.tie_rel_tol) ||
                     (!detail::strictly_better(best_obj, sol.objective, options.tie_rel_tol) &&
                      trial_support < best_candidate));
                if (wins) {
                    best_obj = sol.objective;
                    best_out = out;
                    best_in = in;
                    best_candidate = trial_support;
                }
            }
        }
        if (best_out < 0) break;
        current.erase(std::remove(current.begin(), current.end(), best_out), current.end());
        current.push_back(best_in);
        std::sort(current.begin(), current.end());
        current_obj = best_obj;
    }

    if (current.empty()) throw solver_error("greedy selection produced no support");

    SupportSet final_support(current);
    SimplexQpResult final_sol = qp.solve(final_support);
    result.support = final_support;
    result.coefficients = final_sol.weights;
    result.objective = gram.direct_sse(final_support, final_sol.weights);
    result.optimality = Optimality::heuristic;
    result.regularized = final_sol.regularized;
    result.fallback = final_sol.fallback;
    result.stopped_early = result.stopped_early || static_cast<int>(current.size()) < sparsity;
    return result;
}

} // namespace spar
