#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spar/csv.hpp"
#include "spar/errors.hpp"
#include "spar/lag_system.hpp"
#include "spar/parallel.hpp"
#include "spar/support.hpp"
#include "spar/simplex_qp.hpp"
#include "spar/tensor.hpp"

namespace spar {

struct FitOptions {
    double kkt_rel_tol = 1e-8;
    double ridge_factor = 1e-10;
    int max_pg_iters = 100000;
};

/// One per-series fit: coefficients on the probability simplex over the
/// shared support.
struct SimplexFit {
    SeriesKey key{};
    SupportSet support;
    std::vector<double> coeffs;  // aligned with support.lags()
    double sse = 0.0;            // direct residual recomputation at coeffs
    double kkt_residual = 0.0;   // normalized by 1 + |y|^2
    bool regularized = false;
    bool fallback = false;
};

namespace detail {

/// Gram matrix, right-hand side and squared target norm of one lag system
/// restricted to a support, accumulated in ascending sample order.
inline void accumulate_normal_equations(const LagSystem& system, const SupportSet& support,
                                        Eigen::MatrixXd& G, Eigen::VectorXd& c, double& yy) {
    const auto& lags = support.lags();
    const Eigen::Index q = static_cast<Eigen::Index>(lags.size());
    const std::size_t m = system.sample_count();
    std::vector<double> row(lags.size());
    for (std::size_t i = 0; i < m; ++i) {
        const double y = system.target(i);
        yy += y * y;
        for (Eigen::Index a = 0; a < q; ++a) row[a] = system.lag_value(lags[a], i);
        for (Eigen::Index a = 0; a < q; ++a) {
            c(a) += row[a] * y;
            for (Eigen::Index b = a; b < q; ++b) G(a, b) += row[a] * row[b];
        }
    }
    for (Eigen::Index a = 0; a < q; ++a)
        for (Eigen::Index b = 0; b < a; ++b) G(a, b) = G(b, a);
}

} // namespace detail

/// Per-series fixed-support fit: minimize the one-step squared error over
/// coefficients on the probability simplex.
inline SimplexFit fit_series(const LagSystem& system, const SupportSet& support,
                             const FitOptions& options = {},
                             std::span<const double> warm_start = {}) {
    if (support.empty()) throw usage_error("empty support");
    if (support.max_lag() > system.order())
        throw usage_error("support lag " + std::to_string(support.max_lag()) +
                          " exceeds system order " + std::to_string(system.order()));

    const Eigen::Index q = static_cast<Eigen::Index>(support.size());
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(q, q);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(q);
    double yy = 0.0;
    detail::accumulate_normal_equations(system, support, G, c, yy);

    SimplexQpOptions qp;
    qp.kkt_rel_tol = options.kkt_rel_tol;
    qp.ridge_factor = options.ridge_factor;
    qp.max_pg_iters = options.max_pg_iters;
    SimplexQpResult sol = solve_simplex_qp(G, c, yy, qp, warm_start);

    SimplexFit fit;
    fit.support = support;
    fit.coeffs = std::move(sol.weights);
    fit.sse = residual_sse(system, support, fit.coeffs);
    fit.kkt_residual = sol.kkt_residual;
    fit.regularized = sol.regularized;
    fit.fallback = sol.fallback;
    return fit;
}

/// Batch fit results over a tensor, in canonical (location, variable)
/// order.  Missing series carry an explicit marker; failed series carry the
/// failure message.
struct CoefficientField {
    enum class Status { ok, missing, failed };

    struct Record {
        SeriesKey key{};
        Status status = Status::missing;
        std::string message;          // failure reason when failed
        std::optional<SimplexFit> fit;
    };

    SupportSet support;
    int order = 0;
    std::vector<std::string> locations;
    std::vector<std::string> variables;
    std::vector<Record> records;

    std::size_t count(Status s) const {
        std::size_t n = 0;
        for (const auto& r : records)
            if (r.status == s) ++n;
        return n;
    }
};

/// Fit every non-missing series on the fixed support.  Individual failures
/// are recorded, not thrown; the batch throws only if no series at all
/// could be fitted.
inline CoefficientField fit_all(const MobilityTensor& tensor, int order, const SupportSet& support,
                                const FitOptions& options = {}, int threads = 1) {
    if (support.empty()) throw usage_error("empty support");
    if (support.max_lag() > order)
        throw usage_error("support lag exceeds order");

    CoefficientField field;
    field.support = support;
    field.order = order;
    field.locations = tensor.locations();
    field.variables = tensor.variables();
    field.records.resize(tensor.num_locations() * tensor.num_variables());

    const std::size_t V = tensor.num_variables();
    parallel_for(field.records.size(), threads, [&](std::size_t idx) {
        const SeriesKey key{idx / V, idx % V};
        auto& rec = field.records[idx];
        rec.key = key;
        if (tensor.is_missing(key)) {
            rec.status = CoefficientField::Status::missing;
            return;
        }
        try {
            LagSystem system(tensor.series(key), order);
            rec.fit = fit_series(system, support, options);
            rec.fit->key = key;
            rec.status = CoefficientField::Status::ok;
        } catch (const error& e) {
            rec.status = CoefficientField::Status::failed;
            rec.message = e.what();
        }
    });

    if (field.count(CoefficientField::Status::ok) == 0)
        throw data_error("no series could be fitted");
    return field;
}

/// CSV form: location,variable,lag,coefficient,sse,status -- one row per
/// (fitted series, support lag); missing/failed series emit a single marker
/// row with empty numeric fields.
inline std::string to_csv(const CoefficientField& field) {
    std::string out = "location,variable,lag,coefficient,sse,status\n";
    for (const auto& rec : field.records) {
        const std::string loc = csv::quote_field(field.locations[rec.key.location]);
        const std::string var = csv::quote_field(field.variables[rec.key.variable]);
        if (rec.status == CoefficientField::Status::ok) {
            const auto& fit = *rec.fit;
            std::string status = "ok";
            if (fit.regularized) status = "regularized";
            if (fit.fallback) status = "fallback";
            for (std::size_t j = 0; j < fit.support.size(); ++j) {
                out += loc + ',' + var + ',' + csv::format_int(fit.support.lags()[j]) + ',' +
                       csv::format_double(fit.coeffs[j]) + ',' + csv::format_double(fit.sse) +
                       ',' + status + '\n';
            }
        } else if (rec.status == CoefficientField::Status::missing) {
            out += loc + ',' + var + ",,,,missing\n";
        } else {
            out += loc + ',' + var + ",,,," + csv::quote_field("failed: " + rec.message) + '\n';
        }
    }
    return out;
}

inline void write_csv(const CoefficientField& field, const std::filesystem::path& path) {
    csv::write_file_atomic(path, to_csv(field));
}

/// Parse a coefficient CSV back into a CoefficientField.  `order`, when
/// positive, is recorded; otherwise the maximum lag seen is used.
inline CoefficientField coefficient_field_from_csv(const std::filesystem::path& path, int order = 0) {
    csv::Reader reader(path);
    std::vector<std::string> fields;
    std::size_t line = 0;
    if (!reader.next(fields, line) || fields.size() < 6 || fields[0] != "location")
        throw data_error("bad coefficient CSV header in " + path.string());

    CoefficientField field;
    std::unordered_map<std::string, std::size_t> loc_index, var_index;
    struct Partial {
        std::vector<std::pair<int, double>> coeffs;
        double sse = 0.0;
        std::string status;
    };
    std::map<std::pair<std::size_t, std::size_t>, Partial> partials;

    while (reader.next(fields, line)) {
        if (fields.size() < 6)
            throw data_error("row " + csv::format_int(static_cast<std::int64_t>(line)) +
                             ": expected 6 columns");
        const std::size_t n = detail::intern(field.locations, loc_index, fields[0]);
        const std::size_t v = detail::intern(field.variables, var_index, fields[1]);
        auto& part = partials[{n, v}];
        if (fields[5] == "missing" || fields[5].rfind("failed", 0) == 0) {
            part.status = fields[5];
            continue;
        }
        const auto lag = csv::parse_int(fields[2]);
        const auto coeff = csv::parse_double(fields[3]);
        const auto sse = csv::parse_double(fields[4]);
        if (!lag || !coeff || !sse)
            throw data_error("row " + csv::format_int(static_cast<std::int64_t>(line)) +
                             ": bad numeric field");
        part.coeffs.emplace_back(static_cast<int>(*lag), *coeff);
        part.sse = *sse;
        part.status = fields[5];
    }
    if (field.locations.empty()) throw data_error("no rows in " + path.string());

    std::vector<int> support_lags;
    for (auto& [key, part] : partials) {
        if (part.coeffs.empty()) continue;
        std::vector<int> lags;
        for (auto& [lag, coeff] : part.coeffs) lags.push_back(lag);
        std::sort(lags.begin(), lags.end());
        if (support_lags.empty()) support_lags = lags;
        else if (support_lags != lags)
            throw data_error("inconsistent support across series in " + path.string());
    }
    if (support_lags.empty()) throw data_error("no fitted series in " + path.string());
    field.support = SupportSet(support_lags);
    field.order = order > 0 ? order : field.support.max_lag();

    field.records.resize(field.locations.size() * field.variables.size());
    const std::size_t V = field.variables.size();
    for (std::size_t idx = 0; idx < field.records.size(); ++idx) {
        auto& rec = field.records[idx];
        rec.key = {idx / V, idx % V};
        auto it = partials.find({rec.key.location, rec.key.variable});
        if (it == partials.end() || it->second.status == "missing") {
            rec.status = CoefficientField::Status::missing;
            continue;
        }
        auto& part = it->second;
        if (part.coeffs.empty()) {
            rec.status = CoefficientField::Status::failed;
            rec.message = part.status;
            continue;
        }
        std::sort(part.coeffs.begin(), part.coeffs.end());
        SimplexFit fit;
        fit.key = rec.key;
        fit.support = field.support;
        for (auto& [lag, coeff] : part.coeffs) fit.coeffs.push_back(coeff);
        fit.sse = part.sse;
        fit.regularized = part.status == "regularized";
        fit.fallback = part.status == "fallback";
        rec.fit = std::move(fit);
        rec.status = CoefficientField::Status::ok;
    }
    return field;
}

} // namespace spar
