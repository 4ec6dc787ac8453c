// spar: periodicity analysis of count time series via sparse simplex
// autoregression.  Subcommands wire ingestion, support selection, per-series
// fitting, reporting and synthetic studies; all outputs are deterministic
// functions of the input files and flags.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "spar/analytics.hpp"
#include "spar/config.hpp"
#include "spar/json_io.hpp"
#include "spar/simplex_fit.hpp"
#include "spar/support_select.hpp"
#include "spar/synth.hpp"
#include "spar/tensor.hpp"

namespace {

struct CommonArgs {
    spar::SolverConfig config;
    std::string config_path;
    bool wide = false;
    std::string wide_variable = "value";
};

void add_common_flags(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "JSON config file (flags override it)");
    cmd->add_option("--order", args.config.order, "autoregression order d");
    cmd->add_option("--sparsity", args.config.sparsity, "maximum support cardinality tau");
    cmd->add_option("--solver", args.config.solver, "support solver: greedy or exact");
    cmd->add_option("--node-budget", args.config.node_budget, "exact solver node budget");
    cmd->add_option("--time-budget", args.config.time_budget_seconds,
                    "exact solver wall-clock budget in seconds (0 = none)");
    cmd->add_option("--swap-rounds", args.config.swap_rounds, "greedy swap rounds");
    cmd->add_option("--target-lag", args.config.target_lag, "lag reported as periodicity strength");
    cmd->add_option("--thresholds", args.config.thresholds, "strength thresholds for counts")
        ->delimiter(',');
    cmd->add_option("--seed", args.config.seed, "seed for synthetic generation");
    cmd->add_option("--threads", args.config.threads, "parallelism degree");
    cmd->add_flag("--sort-ids", args.config.sort_ids,
                  "order identifiers lexicographically instead of by first appearance");
    cmd->add_flag("--zero-based-time", args.config.zero_based_time,
                  "input time indices start at 0");
    cmd->add_flag("--timestamps", args.config.parse_timestamps,
                  "time column holds ISO-8601 timestamps, mapped per variable to step indices");
    cmd->add_option("--resolution", args.config.resolution, "time-step duration: 1h or 30min");
    cmd->add_option("--week-anchor", args.config.week_anchor,
                    "step-of-week of the first time index (0 = Monday 00:00)");
    cmd->add_flag("--wide", args.wide, "input is wide format (one column per location)");
    cmd->add_option("--variable", args.wide_variable, "variable name for wide-format input");
}

// flags > config file > defaults
void finalize_config(CLI::App* cmd, CommonArgs& args) {
    if (args.config_path.empty()) {
        args.config.resolve_defaults();
        args.config.validate();
        return;
    }
    spar::SolverConfig from_file; // defaults
    spar::apply_json(from_file, spar::load_json_file(args.config_path));
    auto keep_flag = [&](const std::string& name, auto member) {
        if (cmd->count(name) > 0) from_file.*member = args.config.*member;
    };
    keep_flag("--order", &spar::SolverConfig::order);
    keep_flag("--sparsity", &spar::SolverConfig::sparsity);
    keep_flag("--solver", &spar::SolverConfig::solver);
    keep_flag("--node-budget", &spar::SolverConfig::node_budget);
    keep_flag("--time-budget", &spar::SolverConfig::time_budget_seconds);
    keep_flag("--swap-rounds", &spar::SolverConfig::swap_rounds);
    keep_flag("--target-lag", &spar::SolverConfig::target_lag);
    keep_flag("--thresholds", &spar::SolverConfig::thresholds);
    keep_flag("--seed", &spar::SolverConfig::seed);
    keep_flag("--threads", &spar::SolverConfig::threads);
    keep_flag("--sort-ids", &spar::SolverConfig::sort_ids);
    keep_flag("--zero-based-time", &spar::SolverConfig::zero_based_time);
    keep_flag("--timestamps", &spar::SolverConfig::parse_timestamps);
    keep_flag("--resolution", &spar::SolverConfig::resolution);
    keep_flag("--week-anchor", &spar::SolverConfig::week_anchor);
    args.config = from_file;
    args.config.resolve_defaults();
    args.config.validate();
}

spar::MobilityTensor load_tensor(const std::string& path, const CommonArgs& args) {
    spar::IngestOptions options;
    options.one_based_time = !args.config.zero_based_time;
    options.sort_ids = args.config.sort_ids;
    options.parse_timestamps = args.config.parse_timestamps;
    options.resolution = args.config.resolution;
    if (args.wide) return spar::ingest_wide_csv(path, args.wide_variable, "time_index", options);
    return spar::ingest_long_csv(path, {}, options);
}

spar::SelectOptions select_options(const spar::SolverConfig& config, bool trace) {
    spar::SelectOptions opt;
    opt.node_budget = config.node_budget;
    opt.time_budget_seconds = config.time_budget_seconds;
    opt.swap_rounds = config.swap_rounds;
    opt.tie_rel_tol = config.tie_rel_tol;
    opt.improve_rel_tol = config.improve_rel_tol;
    opt.fit.kkt_rel_tol = config.kkt_rel_tol;
    opt.threads = config.threads;
    opt.collect_trace = trace;
    return opt;
}

int run(int argc, char** argv) {
    CLI::App app{"Periodicity of count time series via sparse simplex autoregression"};
    app.require_subcommand(1);
    app.footer("Exit codes: 0 ok, 1 usage, 2 data validation, 3 solver without incumbent, 4 internal.");

    // ---- select ----
    auto* select = app.add_subcommand("select", "choose the shared lag support set");
    CommonArgs select_args;
    std::string select_input, select_out, select_trace;
    select->add_option("--input", select_input, "input counts CSV")->required();
    select->add_option("--out", select_out, "output selection JSON")->required();
    select->add_option("--trace", select_trace, "optional per-iteration trace CSV");
    add_common_flags(select, select_args);

    // ---- fit ----
    auto* fit = app.add_subcommand("fit", "fit per-series simplex coefficients on a fixed support");
    CommonArgs fit_args;
    std::string fit_input, fit_support, fit_out;
    fit->add_option("--input", fit_input, "input counts CSV")->required();
    fit->add_option("--support", fit_support, "selection JSON (or bare {\"support\": [...]})")
        ->required();
    fit->add_option("--out", fit_out, "output coefficients CSV")->required();
    add_common_flags(fit, fit_args);

    // ---- report ----
    auto* report = app.add_subcommand("report", "periodicity strengths and derived analytics");
    CommonArgs report_args;
    std::string report_coeffs, report_out, report_json, report_input;
    std::vector<std::string> diff_vars;
    std::string diff_out, profile_out, recovery_out, baseline;
    std::string scatter_location, scatter_variable, scatter_out, daily_out;
    int scatter_lag = 0;
    report->add_option("--coeffs", report_coeffs, "coefficients CSV from 'fit'")->required();
    report->add_option("--out", report_out, "output report CSV")->required();
    report->add_option("--json", report_json, "optional nested JSON report");
    report->add_option("--input", report_input, "counts CSV for profile/scatter/daily outputs");
    report->add_option("--diff", diff_vars, "two variables A B: report strengths(B) - strengths(A)")
        ->expected(2);
    report->add_option("--diff-out", diff_out, "output CSV for --diff");
    report->add_option("--weekly-profile", profile_out, "output CSV of mean counts by step-of-week");
    report->add_option("--recovery", recovery_out, "output CSV of recovery percentages vs --baseline");
    report->add_option("--baseline", baseline, "baseline variable for recovery percentages");
    report->add_option("--scatter-location", scatter_location, "location for lag scatter export");
    report->add_option("--scatter-variable", scatter_variable, "variable for lag scatter export");
    report->add_option("--scatter-lag", scatter_lag, "lag for scatter export (default: target lag)");
    report->add_option("--scatter-out", scatter_out, "output CSV for lag scatter");
    report->add_option("--daily-average", daily_out, "output CSV of per-series mean daily counts");
    add_common_flags(report, report_args);

    // ---- synth ----
    auto* synth = app.add_subcommand("synth", "generate a synthetic tensor with planted periods");
    CommonArgs synth_args;
    std::string synth_spec, synth_out, synth_truth;
    synth->add_option("--spec", synth_spec, "synthetic spec JSON")->required();
    synth->add_option("--out", synth_out, "output counts CSV")->required();
    synth->add_option("--truth", synth_truth, "output ground-truth JSON");
    add_common_flags(synth, synth_args);

    // ---- study ----
    auto* study = app.add_subcommand("study", "noise-sweep recovery study over synthetic tensors");
    CommonArgs study_args;
    std::string study_grid, study_out;
    study->add_option("--grid", study_grid, "study grid JSON")->required();
    study->add_option("--out", study_out, "output study CSV")->required();
    add_common_flags(study, study_args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e); // prints help or the parse error
        return code == 0 ? 0 : 1;
    }

    if (select->parsed()) {
        finalize_config(select, select_args);
        const auto& config = select_args.config;
        spar::MobilityTensor tensor = load_tensor(select_input, select_args);
        spar::SelectOptions options = select_options(config, !select_trace.empty());
        spar::SelectionResult result =
            config.solver == "exact"
                ? spar::select_support_exact(tensor, config.order, config.sparsity, options)
                : spar::select_support_greedy(tensor, config.order, config.sparsity, options);
        spar::write_json_atomic(select_out, spar::to_json(result, config));
        if (!select_trace.empty()) spar::csv::write_file_atomic(select_trace, spar::trace_csv(result));
        std::cerr << "selected support " << result.support.to_string() << " ("
                  << spar::to_string(result.optimality) << ", objective "
                  << spar::csv::format_double(result.objective) << ")\n";
        return 0;
    }

    if (fit->parsed()) {
        finalize_config(fit, fit_args);
        const auto& config = fit_args.config;
        spar::MobilityTensor tensor = load_tensor(fit_input, fit_args);
        spar::LoadedSupport loaded = spar::support_from_json_file(fit_support);
        const spar::SupportSet& support = loaded.support;
        spar::FitOptions options;
        options.kkt_rel_tol = config.kkt_rel_tol;
        // order precedence: explicit flag, then the selection file's config
        // echo, then the largest selected lag
        int order = config.order;
        if (fit->count("--order") == 0)
            order = loaded.order > 0 ? loaded.order : support.max_lag();
        if (order < support.max_lag())
            throw spar::usage_error("order " + std::to_string(order) +
                                    " is smaller than the largest support lag " +
                                    std::to_string(support.max_lag()));
        spar::CoefficientField field =
            spar::fit_all(tensor, order, support, options, config.threads);
        spar::write_csv(field, fit_out);
        const std::size_t failed = field.count(spar::CoefficientField::Status::failed);
        for (const auto& rec : field.records)
            if (rec.status == spar::CoefficientField::Status::failed)
                std::cerr << "failed: (" << field.locations[rec.key.location] << ", "
                          << field.variables[rec.key.variable] << "): " << rec.message << "\n";
        std::cerr << "fitted " << field.count(spar::CoefficientField::Status::ok) << " series, "
                  << failed << " failed, " << field.count(spar::CoefficientField::Status::missing)
                  << " missing\n";
        return 0;
    }

    if (report->parsed()) {
        finalize_config(report, report_args);
        const auto& config = report_args.config;
        const int order_hint = report->count("--order") > 0 ? config.order : 0;
        spar::CoefficientField field = spar::coefficient_field_from_csv(report_coeffs, order_hint);
        spar::PeriodicityReport rpt =
            spar::extract_strengths(field, config.target_lag, config.thresholds);
        spar::csv::write_file_atomic(report_out, spar::to_csv(rpt));
        if (!report_json.empty()) spar::write_json_atomic(report_json, spar::to_json(rpt, config));

        if (!diff_vars.empty()) {
            if (diff_out.empty()) throw spar::usage_error("--diff requires --diff-out");
            spar::DiffReport diff = spar::diff_strengths(spar::slice_variable(rpt, diff_vars[0]),
                                                         spar::slice_variable(rpt, diff_vars[1]));
            spar::csv::write_file_atomic(diff_out, spar::to_csv(diff));
        }

        const bool needs_tensor = !profile_out.empty() || !recovery_out.empty() ||
                                  !scatter_out.empty() || !daily_out.empty();
        if (needs_tensor) {
            if (report_input.empty())
                throw spar::usage_error("profile/recovery/scatter/daily outputs require --input");
            spar::MobilityTensor tensor = load_tensor(report_input, report_args);
            if (!profile_out.empty() || !recovery_out.empty()) {
                if (baseline.empty())
                    throw spar::usage_error("--weekly-profile/--recovery require --baseline");
                spar::WeeklyProfile profile =
                    spar::weekly_profile(tensor, baseline, config.week_anchor);
                if (!profile_out.empty())
                    spar::csv::write_file_atomic(profile_out, spar::to_csv(profile));
                if (!recovery_out.empty()) {
                    std::string out = "variable,recovery_percent,weeks_used\n";
                    for (std::size_t v = 0; v < profile.variables.size(); ++v)
                        out += spar::csv::quote_field(profile.variables[v]) + ',' +
                               spar::csv::format_double(profile.recovery_percent[v]) + ',' +
                               spar::csv::format_int(
                                   static_cast<std::int64_t>(profile.weeks_used[v])) +
                               '\n';
                    spar::csv::write_file_atomic(recovery_out, out);
                }
            }
            if (!scatter_out.empty()) {
                if (scatter_location.empty() || scatter_variable.empty())
                    throw spar::usage_error(
                        "--scatter-out requires --scatter-location and --scatter-variable");
                const spar::SeriesKey key{tensor.find_location(scatter_location),
                                          tensor.find_variable(scatter_variable)};
                const int lag = scatter_lag > 0 ? scatter_lag : config.target_lag;
                spar::csv::write_file_atomic(scatter_out,
                                             spar::lag_scatter_csv(tensor.series(key), lag));
            }
            if (!daily_out.empty()) {
                spar::DailyAverage daily = spar::daily_average(tensor);
                for (const auto& w : daily.warnings) std::cerr << "warning: " << w << "\n";
                spar::csv::write_file_atomic(daily_out, spar::to_csv(daily));
            }
        }
        return 0;
    }

    if (synth->parsed()) {
        finalize_config(synth, synth_args);
        spar::SynthSpec spec = spar::synth_spec_from_json(spar::load_json_file(synth_spec));
        if (synth->count("--seed") > 0) spec.seed = synth_args.config.seed;
        spar::GenerateResult gen = spar::generate(spec);
        spar::write_long_csv(gen.tensor, synth_out);
        if (!synth_truth.empty()) {
            spar::json truth;
            spar::json weights = spar::json::object();
            for (const auto& [lag, weight] : gen.truth)
                weights[spar::csv::format_int(lag)] = weight;
            truth["weights"] = weights;
            truth["clamped"] = gen.clamped;
            truth["spec"] = spar::to_json(spec);
            spar::write_json_atomic(synth_truth, truth);
        }
        std::cerr << "generated " << spec.locations << "x" << spec.variables << "x" << spec.length
                  << " tensor (clamped " << gen.clamped << ")\n";
        return 0;
    }

    if (study->parsed()) {
        finalize_config(study, study_args);
        spar::StudyGrid grid = spar::study_grid_from_json(spar::load_json_file(study_grid));
        std::vector<spar::StudyRow> rows = spar::recovery_study(grid, study_args.config.threads);
        spar::csv::write_file_atomic(study_out, spar::to_csv(rows));
        return 0;
    }

    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const spar::usage_error& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const spar::data_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const spar::solver_error& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 4;
    }
}
