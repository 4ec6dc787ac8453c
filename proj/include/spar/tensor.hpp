#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "spar/csv.hpp"
#include "spar/errors.hpp"

namespace spar {

struct SeriesKey {
    std::size_t location = 0;
    std::size_t variable = 0;

    friend bool operator==(const SeriesKey&, const SeriesKey&) = default;
};

/// Ragged third-order array of non-negative counts indexed
/// (location, variable, time).  All series under one variable share that
/// variable's length; lengths may differ across variables.  Immutable after
/// construction and safe to share across threads.
class MobilityTensor {
public:
    MobilityTensor() = default;

    MobilityTensor(std::vector<std::string> locations,
                   std::vector<std::string> variables,
                   std::string resolution)
        : locations_(std::move(locations)),
          variables_(std::move(variables)),
          resolution_(std::move(resolution)) {
        blocks_.resize(variables_.size());
        for (auto& b : blocks_) b.missing.assign(locations_.size(), 1);
    }

    std::size_t num_locations() const { return locations_.size(); }
    std::size_t num_variables() const { return variables_.size(); }
    const std::vector<std::string>& locations() const { return locations_; }
    const std::vector<std::string>& variables() const { return variables_; }
    const std::string& resolution() const { return resolution_; }

    std::size_t length(std::size_t variable) const {
        check_variable(variable);
        return blocks_[variable].length;
    }

    bool is_missing(const SeriesKey& key) const {
        check_key(key);
        return blocks_[key.variable].missing[key.location] != 0;
    }

    /// Read-only view over one series in time order.  Throws
    /// missing_series_error for flagged series and bad_index_error for keys
    /// outside the declared identifier ranges.
    std::span<const std::int64_t> series(const SeriesKey& key) const {
        check_key(key);
        const auto& b = blocks_[key.variable];
        if (b.missing[key.location]) {
            throw missing_series_error("missing series: location '" + locations_[key.location] +
                                       "', variable '" + variables_[key.variable] + "'");
        }
        return std::span<const std::int64_t>(b.counts.data() + key.location * b.length, b.length);
    }

    std::int64_t total_count() const {
        std::int64_t total = 0;
        for (std::size_t v = 0; v < blocks_.size(); ++v) {
            const auto& b = blocks_[v];
            for (std::size_t n = 0; n < locations_.size(); ++n) {
                if (b.missing[n]) continue;
                for (std::size_t t = 0; t < b.length; ++t) total += b.counts[n * b.length + t];
            }
        }
        return total;
    }

    std::size_t find_variable(const std::string& id) const {
        for (std::size_t v = 0; v < variables_.size(); ++v)
            if (variables_[v] == id) return v;
        throw bad_index_error("unknown variable: '" + id + "'");
    }

    std::size_t find_location(const std::string& id) const {
        for (std::size_t n = 0; n < locations_.size(); ++n)
            if (locations_[n] == id) return n;
        throw bad_index_error("unknown location: '" + id + "'");
    }

    /// Builder used by ingestion, the synthetic generator and tests.
    /// Series are installed per (location, variable); lengths must agree
    /// within a variable.
    void set_series(const SeriesKey& key, std::vector<std::int64_t> counts) {
        check_key(key);
        auto& b = blocks_[key.variable];
        if (b.length == 0 && first_install(b)) {
            b.length = counts.size();
            b.counts.assign(locations_.size() * b.length, 0);
        }
        if (counts.size() != b.length) {
            throw data_error("series length " + csv::format_int(static_cast<std::int64_t>(counts.size())) +
                             " does not match variable length " +
                             csv::format_int(static_cast<std::int64_t>(b.length)));
        }
        for (std::int64_t c : counts)
            if (c < 0) throw data_error("negative count in series");
        std::copy(counts.begin(), counts.end(), b.counts.begin() + key.location * b.length);
        b.missing[key.location] = 0;
    }

private:
    struct VariableBlock {
        std::size_t length = 0;
        std::vector<std::int64_t> counts; // locations * length, location-major
        std::vector<char> missing;        // per location
    };

    static bool first_install(const VariableBlock& b) { return b.counts.empty(); }

    void check_variable(std::size_t v) const {
        if (v >= variables_.size())
            throw bad_index_error("variable index " + csv::format_int(static_cast<std::int64_t>(v)) +
                                  " out of range [0, " +
                                  csv::format_int(static_cast<std::int64_t>(variables_.size())) + ")");
    }

    void check_key(const SeriesKey& key) const {
        check_variable(key.variable);
        if (key.location >= locations_.size())
            throw bad_index_error("location index " + csv::format_int(static_cast<std::int64_t>(key.location)) +
                                  " out of range [0, " +
                                  csv::format_int(static_cast<std::int64_t>(locations_.size())) + ")");
    }

    std::vector<std::string> locations_;
    std::vector<std::string> variables_;
    std::string resolution_ = "1h";
    std::vector<VariableBlock> blocks_;
};

struct IngestSchema {
    std::string location = "location";
    std::string variable = "variable";
    std::string time = "time_index";
    std::string count = "count";
};

struct IngestOptions {
    bool one_based_time = true;  // false: input indices start at 0
    bool sort_ids = false;       // lexicographic identifier order instead of first appearance
    bool parse_timestamps = false; // time column holds ISO-8601 timestamps
    std::string resolution = "1h";
};

namespace detail {

/// Seconds per step for the ISO-8601 convenience mapping.
inline std::int64_t step_seconds(const std::string& resolution) {
    if (resolution == "1h") return 3600;
    if (resolution == "30min") return 1800;
    throw data_error("unknown time resolution '" + resolution + "' (expected 1h or 30min)");
}

/// Parses "YYYY-MM-DD HH:MM[:SS]" or "YYYY-MM-DDTHH:MM[:SS]" to seconds
/// since the civil epoch (no time zones).  Returns nullopt on malformed
/// input.
inline std::optional<std::int64_t> parse_iso8601_seconds(std::string_view s) {
    auto digits = [&](std::size_t pos, std::size_t n, std::int64_t& out) {
        if (pos + n > s.size()) return false;
        out = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const char ch = s[pos + i];
            if (ch < '0' || ch > '9') return false;
            out = out * 10 + (ch - '0');
        }
        return true;
    };
    std::int64_t year, month, day, hour, minute, second = 0;
    if (!digits(0, 4, year) || s.size() < 16) return std::nullopt;
    if (s[4] != '-' || s[7] != '-') return std::nullopt;
    if (!digits(5, 2, month) || !digits(8, 2, day)) return std::nullopt;
    if (s[10] != 'T' && s[10] != ' ') return std::nullopt;
    if (!digits(11, 2, hour) || s[13] != ':' || !digits(14, 2, minute)) return std::nullopt;
    if (s.size() >= 19) {
        if (s[16] != ':' || !digits(17, 2, second)) return std::nullopt;
        if (s.size() > 19) return std::nullopt;
    } else if (s.size() != 16) {
        return std::nullopt;
    }
    if (month < 1 || month > 12 || day < 1 || day > 31 || hour > 23 || minute > 59 || second > 59)
        return std::nullopt;
    // days-from-civil
    const std::int64_t y = year - (month <= 2 ? 1 : 0);
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const std::int64_t yoe = y - era * 400;
    const std::int64_t doy = (153 * (month + (month > 2 ? -3 : 9)) + 2) / 5 + day - 1;
    const std::int64_t doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    const std::int64_t days = era * 146097 + doe - 719468;
    return days * 86400 + hour * 3600 + minute * 60 + second;
}

} // namespace detail

namespace detail {

inline std::size_t intern(std::vector<std::string>& ids,
                          std::unordered_map<std::string, std::size_t>& index,
                          const std::string& id) {
    auto it = index.find(id);
    if (it != index.end()) return it->second;
    const std::size_t pos = ids.size();
    ids.push_back(id);
    index.emplace(id, pos);
    return pos;
}

struct RawSeries {
    std::map<std::size_t, std::int64_t> by_time; // 1-based time -> count
};

inline MobilityTensor assemble(std::vector<std::string> locations,
                               std::vector<std::string> variables,
                               std::map<std::pair<std::size_t, std::size_t>, RawSeries>& raw,
                               const IngestOptions& options) {
    if (options.sort_ids) {
        auto reorder = [](std::vector<std::string>& ids) {
            std::vector<std::size_t> perm(ids.size());
            std::iota(perm.begin(), perm.end(), 0);
            std::sort(perm.begin(), perm.end(),
                      [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
            std::vector<std::size_t> inverse(ids.size());
            for (std::size_t i = 0; i < perm.size(); ++i) inverse[perm[i]] = i;
            std::sort(ids.begin(), ids.end());
            return inverse;
        };
        auto loc_map = reorder(locations);
        auto var_map = reorder(variables);
        std::map<std::pair<std::size_t, std::size_t>, RawSeries> remapped;
        for (auto& [key, series] : raw)
            remapped[{loc_map[key.first], var_map[key.second]}] = std::move(series);
        raw = std::move(remapped);
    }

    // Per-variable length: the maximum observed time index.
    std::vector<std::size_t> lengths(variables.size(), 0);
    for (const auto& [key, series] : raw) {
        if (!series.by_time.empty())
            lengths[key.second] = std::max(lengths[key.second], series.by_time.rbegin()->first);
    }

    MobilityTensor tensor(std::move(locations), std::move(variables), options.resolution);
    for (const auto& [key, series] : raw) {
        const std::size_t T = lengths[key.second];
        // Absent triples inside [1, T] zero-fill: long exports routinely omit
        // zero-count rows, and a count of zero is exactly what absence means.
        std::vector<std::int64_t> counts(T, 0);
        for (const auto& [t, c] : series.by_time) counts[t - 1] = c;
        tensor.set_series({key.first, key.second}, std::move(counts));
    }
    return tensor;
}

} // namespace detail

/// Ingest a long-format CSV: one row per (location, variable, time, count).
/// Series with zero rows are flagged missing; other absent triples within a
/// variable's time range become count 0.
inline MobilityTensor ingest_long_csv(const std::filesystem::path& path,
                                      const IngestSchema& schema = {},
                                      const IngestOptions& options = {}) {
    csv::Reader reader(path);
    std::vector<std::string> fields;
    std::size_t line = 0;
    if (!reader.next(fields, line)) throw data_error("empty file: " + path.string());

    auto column = [&](const std::string& name) {
        for (std::size_t i = 0; i < fields.size(); ++i)
            if (fields[i] == name) return i;
        throw data_error("missing column '" + name + "' in header of " + path.string());
    };
    const std::size_t col_loc = column(schema.location);
    const std::size_t col_var = column(schema.variable);
    const std::size_t col_time = column(schema.time);
    const std::size_t col_count = column(schema.count);
    const std::size_t min_width = std::max({col_loc, col_var, col_time, col_count}) + 1;

    std::vector<std::string> locations, variables;
    std::unordered_map<std::string, std::size_t> loc_index, var_index;
    std::map<std::pair<std::size_t, std::size_t>, detail::RawSeries> raw;

    struct PendingRow {
        std::size_t location, variable;
        std::int64_t time; // index, or seconds when parsing timestamps
        std::int64_t count;
        std::size_t line;
        std::string time_text;
    };
    std::vector<PendingRow> pending;
    std::vector<std::int64_t> var_min_seconds; // per variable, timestamp mode

    while (reader.next(fields, line)) {
        if (fields.size() < min_width)
            throw data_error("row " + csv::format_int(static_cast<std::int64_t>(line)) +
                             ": expected at least " + csv::format_int(static_cast<std::int64_t>(min_width)) +
                             " columns");
        const auto count = csv::parse_int(fields[col_count]);
        if (!count || *count < 0)
            throw data_error("row " + csv::format_int(static_cast<std::int64_t>(line)) +
                             ": count must be a non-negative integer, got '" + fields[col_count] + "'");

        std::int64_t t = 0;
        if (options.parse_timestamps) {
            const auto seconds = detail::parse_iso8601_seconds(fields[col_time]);
            if (!seconds)
                throw data_error("row " + csv::format_int(static_cast<std::int64_t>(line)) +
                                 ": bad timestamp '" + fields[col_time] + "'");
            t = *seconds;
        } else {
            const auto t_raw = csv::parse_int(fields[col_time]);
            if (!t_raw)
                throw data_error("row " + csv::format_int(static_cast<std::int64_t>(line)) +
                                 ": bad time index '" + fields[col_time] + "'");
            t = options.one_based_time ? *t_raw : *t_raw + 1;
            if (t < 1)
                throw data_error("row " + csv::format_int(static_cast<std::int64_t>(line)) +
                                 ": time index out of range");
        }

        const std::size_t n = detail::intern(locations, loc_index, fields[col_loc]);
        const std::size_t v = detail::intern(variables, var_index, fields[col_var]);
        if (options.parse_timestamps) {
            var_min_seconds.resize(variables.size(), std::numeric_limits<std::int64_t>::max());
            var_min_seconds[v] = std::min(var_min_seconds[v], t);
        }
        pending.push_back({n, v, t, *count, line, fields[col_time]});
    }
    if (locations.empty()) throw data_error("no data rows in " + path.string());

    // Timestamps map to 1-based step indices relative to each variable's
    // earliest timestamp.
    const std::int64_t step =
        options.parse_timestamps ? detail::step_seconds(options.resolution) : 1;
    for (const auto& row : pending) {
        std::int64_t t = row.time;
        if (options.parse_timestamps) {
            const std::int64_t offset = t - var_min_seconds[row.variable];
            if (offset % step != 0)
                throw data_error("row " + csv::format_int(static_cast<std::int64_t>(row.line)) +
                                 ": timestamp '" + row.time_text + "' is not aligned to the " +
                                 options.resolution + " grid");
            t = offset / step + 1;
        }
        auto& series = raw[{row.location, row.variable}];
        auto [it, inserted] = series.by_time.emplace(static_cast<std::size_t>(t), row.count);
        if (!inserted)
            throw data_error("row " + csv::format_int(static_cast<std::int64_t>(row.line)) +
                             ": duplicate triple (" + locations[row.location] + ", " +
                             variables[row.variable] + ", " + row.time_text + ")");
    }

    // Series the file never mentions stay flagged missing.
    for (std::size_t n = 0; n < locations.size(); ++n)
        for (std::size_t v = 0; v < variables.size(); ++v)
            raw.try_emplace({n, v});
    for (auto it = raw.begin(); it != raw.end();) {
        if (it->second.by_time.empty()) it = raw.erase(it);
        else ++it;
    }
    return detail::assemble(std::move(locations), std::move(variables), raw, options);
}

/// Ingest a wide-format CSV: a time column plus one column per location,
/// all belonging to a single variable.  Absent rows zero-fill every
/// location; an empty cell in a present row is ragged coverage and is
/// rejected, unless that location's column is empty throughout (missing
/// series).
inline MobilityTensor ingest_wide_csv(const std::filesystem::path& path,
                                      const std::string& variable,
                                      const std::string& time_column = "time_index",
                                      const IngestOptions& options = {}) {
    csv::Reader reader(path);
    std::vector<std::string> fields;
    std::size_t line = 0;
    if (!reader.next(fields, line)) throw data_error("empty file: " + path.string());

    std::size_t col_time = fields.size();
    std::vector<std::string> locations;
    std::vector<std::size_t> loc_cols;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (fields[i] == time_column) {
            col_time = i;
        } else {
            locations.push_back(fields[i]);
            loc_cols.push_back(i);
        }
    }
    if (col_time == fields.size())
        throw data_error("missing column '" + time_column + "' in header of " + path.string());
    if (locations.empty()) throw data_error("no location columns in " + path.string());

    struct Cell { std::size_t t; std::int64_t count; };
    std::vector<std::vector<Cell>> cells(locations.size());
    std::vector<std::vector<std::size_t>> gaps(locations.size()); // rows with empty cells
    std::map<std::size_t, bool> seen_times;
    std::size_t T = 0;

    while (reader.next(fields, line)) {
        const auto t_raw = csv::parse_int(fields[col_time]);
        if (!t_raw)
            throw data_error("row " + csv::format_int(static_cast<std::int64_t>(line)) +
                             ": bad time index '" + fields[col_time] + "'");
        const std::int64_t t = options.one_based_time ? *t_raw : *t_raw + 1;
        if (t < 1)
            throw data_error("row " + csv::format_int(static_cast<std::int64_t>(line)) +
                             ": time index out of range");
        if (!seen_times.emplace(static_cast<std::size_t>(t), true).second)
            throw data_error("row " + csv::format_int(static_cast<std::int64_t>(line)) +
                             ": duplicate time index " + fields[col_time]);
        T = std::max(T, static_cast<std::size_t>(t));
        for (std::size_t j = 0; j < loc_cols.size(); ++j) {
            const std::string& cell = loc_cols[j] < fields.size() ? fields[loc_cols[j]] : std::string();
            if (cell.empty()) {
                gaps[j].push_back(static_cast<std::size_t>(t));
                continue;
            }
            const auto count = csv::parse_int(cell);
            if (!count || *count < 0)
                throw data_error("row " + csv::format_int(static_cast<std::int64_t>(line)) +
                                 ": count must be a non-negative integer, got '" + cell + "'");
            cells[j].push_back({static_cast<std::size_t>(t), *count});
        }
    }
    if (T == 0) throw data_error("no data rows in " + path.string());

    std::string ragged;
    for (std::size_t j = 0; j < locations.size(); ++j) {
        if (!gaps[j].empty() && !cells[j].empty()) {
            if (!ragged.empty()) ragged += ", ";
            ragged += "(" + locations[j] + ", " + variable + ")";
        }
    }
    if (!ragged.empty())
        throw data_error("ragged time coverage within variable '" + variable +
                         "'; offending series: " + ragged);

    // Rows the file omitted zero-fill for every location via assemble();
    // present rows always carry a cell for each non-missing column, so all
    // non-missing series observe the same maximum time index.
    std::map<std::pair<std::size_t, std::size_t>, detail::RawSeries> raw;
    for (std::size_t j = 0; j < locations.size(); ++j) {
        if (cells[j].empty()) continue; // whole series absent -> missing
        auto& series = raw[{j, 0}];
        for (const auto& c : cells[j]) series.by_time[c.t] = c.count;
    }
    return detail::assemble(std::move(locations), {variable}, raw, options);
}

/// Canonical long-format export; ingest_long_csv(write_long_csv(t)) restores
/// every non-missing series exactly.
inline std::string to_long_csv(const MobilityTensor& tensor) {
    std::string out = "location,variable,time_index,count\n";
    for (std::size_t n = 0; n < tensor.num_locations(); ++n) {
        for (std::size_t v = 0; v < tensor.num_variables(); ++v) {
            const SeriesKey key{n, v};
            if (tensor.is_missing(key)) continue;
            const auto values = tensor.series(key);
            for (std::size_t t = 0; t < values.size(); ++t) {
                out += csv::quote_field(tensor.locations()[n]);
                out += ',';
                out += csv::quote_field(tensor.variables()[v]);
                out += ',';
                out += csv::format_int(static_cast<std::int64_t>(t + 1));
                out += ',';
                out += csv::format_int(values[t]);
                out += '\n';
            }
        }
    }
    return out;
}

inline void write_long_csv(const MobilityTensor& tensor, const std::filesystem::path& path) {
    csv::write_file_atomic(path, to_long_csv(tensor));
}

} // namespace spar
