#pragma once

#include <stdexcept>
#include <string>

namespace spar {

/// Base class for all library errors.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad arguments, malformed configs, out-of-range knobs.  CLI exit code 1.
class usage_error : public error {
public:
    using error::error;
};

/// Input data failed validation (bad counts, duplicates, ragged coverage).
/// CLI exit code 2.
class data_error : public error {
public:
    using error::error;
};

/// A series key does not resolve to a declared location/variable.
class bad_index_error : public data_error {
public:
    using data_error::data_error;
};

/// The addressed series exists but was flagged missing at ingestion.
class missing_series_error : public data_error {
public:
    using data_error::data_error;
};

/// Solver could not produce any incumbent (budget spent before the first
/// feasible evaluation, or no usable series).  CLI exit code 3.
class solver_error : public error {
public:
    using error::error;
};

} // namespace spar
