#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "spar/errors.hpp"

namespace spar {

/// Ordered set of lag indices permitted nonzero coefficients.  Lags are
/// strictly increasing and >= 1.
class SupportSet {
public:
    SupportSet() = default;

    explicit SupportSet(std::vector<int> lags) : lags_(std::move(lags)) {
        std::sort(lags_.begin(), lags_.end());
        for (std::size_t i = 0; i < lags_.size(); ++i) {
            if (lags_[i] < 1) throw usage_error("support lags must be >= 1");
            if (i > 0 && lags_[i] == lags_[i - 1])
                throw usage_error("duplicate lag " + std::to_string(lags_[i]) + " in support");
        }
    }

    const std::vector<int>& lags() const { return lags_; }
    std::size_t size() const { return lags_.size(); }
    bool empty() const { return lags_.empty(); }
    int max_lag() const { return lags_.empty() ? 0 : lags_.back(); }

    bool contains(int lag) const {
        return std::binary_search(lags_.begin(), lags_.end(), lag);
    }

    /// Position of `lag` within the ordered list, or size() if absent.
    std::size_t index_of(int lag) const {
        auto it = std::lower_bound(lags_.begin(), lags_.end(), lag);
        if (it == lags_.end() || *it != lag) return lags_.size();
        return static_cast<std::size_t>(it - lags_.begin());
    }

    SupportSet with(int lag) const {
        std::vector<int> v = lags_;
        v.push_back(lag);
        return SupportSet(std::move(v));
    }

    SupportSet without(int lag) const {
        std::vector<int> v;
        v.reserve(lags_.size());
        for (int k : lags_)
            if (k != lag) v.push_back(k);
        return SupportSet(std::move(v));
    }

    std::string to_string() const {
        std::string s = "{";
        for (std::size_t i = 0; i < lags_.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(lags_[i]);
        }
        s += "}";
        return s;
    }

    friend bool operator==(const SupportSet&, const SupportSet&) = default;

    /// List-lexicographic order; shorter prefixes sort first.  This is the
    /// tie-breaking order used by the solvers.
    friend bool operator<(const SupportSet& a, const SupportSet& b) {
        return std::lexicographical_compare(a.lags_.begin(), a.lags_.end(),
                                            b.lags_.begin(), b.lags_.end());
    }

private:
    std::vector<int> lags_;
};

} // namespace spar
