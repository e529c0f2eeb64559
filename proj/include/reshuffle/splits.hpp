#pragma once

// Validation index sets for holdout, M-fold CV and M-fold holdout, each in a
// fixed form (one draw shared by every configuration) and a reshuffled form
// (an independent draw per configuration).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "reshuffle/errors.hpp"
#include "reshuffle/rng.hpp"

namespace reshuffle {

enum class Variant {
    holdout,
    reshuffled_holdout,
    mfold_cv,
    reshuffled_mfold_cv,
    mfold_holdout,
    reshuffled_mfold_holdout,
};

inline constexpr std::array<Variant, 6> all_variants{
    Variant::holdout,       Variant::reshuffled_holdout,       Variant::mfold_cv,
    Variant::reshuffled_mfold_cv, Variant::mfold_holdout, Variant::reshuffled_mfold_holdout,
};

constexpr std::string_view to_string(Variant v) noexcept {
    switch (v) {
        case Variant::holdout: return "holdout";
        case Variant::reshuffled_holdout: return "reshuffled-holdout";
        case Variant::mfold_cv: return "mfold-cv";
        case Variant::reshuffled_mfold_cv: return "reshuffled-mfold-cv";
        case Variant::mfold_holdout: return "mfold-holdout";
        case Variant::reshuffled_mfold_holdout: return "reshuffled-mfold-holdout";
    }
    return "?";
}

inline std::optional<Variant> parse_variant(std::string_view s) noexcept {
    for (Variant v : all_variants) {
        if (to_string(v) == s) return v;
    }
    return std::nullopt;
}

/// Comma-separated list of the accepted variant names.
inline std::string variant_names() {
    std::string out;
    for (Variant v : all_variants) {
        if (!out.empty()) out += ", ";
        out += to_string(v);
    }
    return out;
}

constexpr bool is_reshuffled(Variant v) noexcept {
    return v == Variant::reshuffled_holdout || v == Variant::reshuffled_mfold_cv ||
           v == Variant::reshuffled_mfold_holdout;
}

constexpr bool is_cv(Variant v) noexcept { return v == Variant::mfold_cv || v == Variant::reshuffled_mfold_cv; }

constexpr bool is_single_holdout(Variant v) noexcept {
    return v == Variant::holdout || v == Variant::reshuffled_holdout;
}

constexpr Variant fixed_counterpart(Variant v) noexcept {
    switch (v) {
        case Variant::reshuffled_holdout: return Variant::holdout;
        case Variant::reshuffled_mfold_cv: return Variant::mfold_cv;
        case Variant::reshuffled_mfold_holdout: return Variant::mfold_holdout;
        default: return v;
    }
}

constexpr Variant reshuffled_counterpart(Variant v) noexcept {
    switch (v) {
        case Variant::holdout: return Variant::reshuffled_holdout;
        case Variant::mfold_cv: return Variant::reshuffled_mfold_cv;
        case Variant::mfold_holdout: return Variant::reshuffled_mfold_holdout;
        default: return v;
    }
}

/// ceil(alpha * n), treating products within 1e-9 of an integer as that
/// integer so that e.g. 0.1 * 30 yields 3 rather than 4.
inline std::size_t ceil_fraction(double alpha, std::size_t n) {
    const double r = alpha * static_cast<double>(n);
    const double nearest = std::round(r);
    if (std::abs(r - nearest) <= 1e-9 * std::max(1.0, r)) return static_cast<std::size_t>(nearest);
    return static_cast<std::size_t>(std::ceil(r));
}

struct SchemeSpec {
    Variant variant = Variant::holdout;
    std::size_t n = 0;
    double alpha = 0.0;
    std::size_t folds = 1; // M

    /// Builds a spec, forcing M = 1 for the single holdout variants and
    /// alpha = 1/M for the CV variants, then validates it.
    static SchemeSpec make(Variant variant, std::size_t n, double alpha, std::size_t folds) {
        SchemeSpec s{variant, n, alpha, folds};
        if (is_single_holdout(variant)) s.folds = 1;
        if (is_cv(variant) && folds > 0) s.alpha = 1.0 / static_cast<double>(folds);
        s.validate();
        return s;
    }

    /// Validation-set size ceil(alpha * n); for CV the size of the larger folds.
    std::size_t validation_size() const { return ceil_fraction(alpha, n); }

    void validate() const {
        const std::string name{to_string(variant)};
        if (n < 2) throw ConfigError(name + ": n must be at least 2 (got " + std::to_string(n) + ")");
        if (folds < 1) throw ConfigError(name + ": M must be positive");
        if (is_single_holdout(variant) && folds != 1) throw ConfigError(name + ": holdout variants require M = 1");
        if (is_cv(variant)) {
            if (folds < 2) throw ConfigError(name + ": CV variants require M >= 2");
            if (folds > n) throw ConfigError(name + ": CV variants require M <= n");
            if (std::abs(alpha * static_cast<double>(folds) - 1.0) > 1e-9) throw ConfigError(name + ": CV variants require alpha * M = 1");
        }
        if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError(name + ": alpha must lie in (0, 1) (got " + std::to_string(alpha) + ")");
        const std::size_t k = validation_size();
        if (k < 1) throw ConfigError(name + ": ceil(alpha * n) must be >= 1 (got 0)");
        if (k >= n) throw ConfigError(name + ": ceil(alpha * n) must be < n (got " + std::to_string(k) + " with n = " + std::to_string(n) + ")");
    }

    friend bool operator==(const SchemeSpec&, const SchemeSpec&) = default;
};

/// Sorted, 0-based validation indices of one fold.
using IndexSet = std::vector<std::uint32_t>;

/// Per-configuration, per-fold validation index sets. Fixed variants store
/// a single shared row that every configuration refers to.
class IndexAssignment {
public:
    IndexAssignment(SchemeSpec scheme, std::size_t configurations, std::vector<std::vector<IndexSet>> rows)
        : scheme_(scheme), configurations_(configurations), rows_(std::move(rows)) {
        check();
    }

    /// Wraps hand-built sets (one row per configuration, or a single row
    /// shared by all when the scheme is fixed). Indices are 0-based.
    static IndexAssignment from_sets(SchemeSpec scheme, std::size_t configurations, std::vector<std::vector<IndexSet>> rows) {
        for (auto& row : rows) {
            for (auto& set : row) std::sort(set.begin(), set.end());
        }
        return IndexAssignment(scheme, configurations, std::move(rows));
    }

    const SchemeSpec& scheme() const noexcept { return scheme_; }
    std::size_t configurations() const noexcept { return configurations_; }
    std::size_t folds() const noexcept { return rows_.front().size(); }
    std::size_t n() const noexcept { return scheme_.n; }
    bool shared() const noexcept { return rows_.size() == 1; }

    std::span<const std::uint32_t> set(std::size_t j, std::size_t m) const {
        return rows_[shared() ? 0 : j][m];
    }

    friend bool operator==(const IndexAssignment& a, const IndexAssignment& b) {
        if (a.scheme_ != b.scheme_ || a.configurations_ != b.configurations_) return false;
        for (std::size_t j = 0; j < a.configurations_; ++j)
            for (std::size_t m = 0; m < a.folds(); ++m)
                if (!std::ranges::equal(a.set(j, m), b.set(j, m))) return false;
        return true;
    }

private:
    void check() const {
        if (configurations_ < 1) throw ConfigError("index assignment: J must be >= 1");
        if (rows_.size() != 1 && rows_.size() != configurations_)
            throw ConfigError("index assignment: expected 1 or J rows of folds");
        const std::size_t m = rows_.front().size();
        for (const auto& row : rows_) {
            if (row.size() != m || m == 0) throw ConfigError("index assignment: every configuration needs the same positive fold count");
            for (const auto& set : row) {
                if (set.empty()) throw ConfigError("index assignment: empty validation set");
                if (!std::is_sorted(set.begin(), set.end()) || std::adjacent_find(set.begin(), set.end()) != set.end())
                    throw ConfigError("index assignment: validation sets must be strictly increasing");
                if (set.back() >= scheme_.n) throw ConfigError("index assignment: index out of range");
            }
        }
    }

    SchemeSpec scheme_;
    std::size_t configurations_;
    std::vector<std::vector<IndexSet>> rows_;
};

namespace detail {

/// Uniform size-k subset of {0..n-1} via a partial Fisher-Yates pass over `perm`.
inline IndexSet draw_subset(std::vector<std::uint32_t>& perm, std::size_t k, Stream& rng) {
    const std::size_t n = perm.size();
    for (std::size_t i = 0; i < k; ++i) {
        const auto r = i + static_cast<std::size_t>(uniform_index(rng, n - i));
        std::swap(perm[i], perm[r]);
    }
    IndexSet out(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(out.begin(), out.end());
    return out;
}

/// Uniform partition into M folds; the first (n mod M) folds take one extra index.
inline std::vector<IndexSet> draw_partition(std::vector<std::uint32_t>& perm, std::size_t folds, Stream& rng) {
    shuffle(std::span(perm), rng);
    const std::size_t n = perm.size();
    const std::size_t base = n / folds;
    const std::size_t extra = n % folds;
    std::vector<IndexSet> out;
    out.reserve(folds);
    std::size_t pos = 0;
    for (std::size_t m = 0; m < folds; ++m) {
        const std::size_t size = base + (m < extra ? 1 : 0);
        IndexSet fold(perm.begin() + static_cast<std::ptrdiff_t>(pos), perm.begin() + static_cast<std::ptrdiff_t>(pos + size));
        std::sort(fold.begin(), fold.end());
        out.push_back(std::move(fold));
        pos += size;
    }
    return out;
}

inline std::vector<std::uint32_t> identity(std::size_t n) {
    std::vector<std::uint32_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0u);
    return perm;
}

} // namespace detail

/// Draws the M validation sets of one configuration. Fixed and reshuffled
/// variants share this routine, so their per-configuration marginals agree.
inline std::vector<IndexSet> draw_configuration(const SchemeSpec& spec, Stream& rng) {
    auto perm = detail::identity(spec.n);
    if (is_cv(spec.variant)) return detail::draw_partition(perm, spec.folds, rng);
    const std::size_t k = spec.validation_size();
    std::vector<IndexSet> row;
    row.reserve(spec.folds);
    for (std::size_t m = 0; m < spec.folds; ++m) row.push_back(detail::draw_subset(perm, k, rng));
    return row;
}

/// Generates the index sets for J configurations. A fixed variant consumes
/// exactly the draws its reshuffled counterpart uses for configuration 0.
inline IndexAssignment generate(const SchemeSpec& spec, std::size_t configurations, Stream& rng) {
    spec.validate();
    if (configurations < 1) throw ConfigError("generate: J must be >= 1");
    std::vector<std::vector<IndexSet>> rows;
    const std::size_t draws = is_reshuffled(spec.variant) ? configurations : 1;
    rows.reserve(draws);
    for (std::size_t j = 0; j < draws; ++j) rows.push_back(draw_configuration(spec, rng));
    return IndexAssignment(spec, configurations, std::move(rows));
}

/// Dense 0/1 tensor indexed (j, m, s) with s 0-based.
class MembershipTensor {
public:
    MembershipTensor(std::size_t configurations, std::size_t folds, std::size_t n)
        : configurations_(configurations), folds_(folds), n_(n), data_(configurations * folds * n, 0) {}

    std::uint8_t operator()(std::size_t j, std::size_t m, std::size_t s) const { return data_[offset(j, m, s)]; }
    std::uint8_t& operator()(std::size_t j, std::size_t m, std::size_t s) { return data_[offset(j, m, s)]; }

    std::size_t configurations() const noexcept { return configurations_; }
    std::size_t folds() const noexcept { return folds_; }
    std::size_t n() const noexcept { return n_; }

    std::size_t row_sum(std::size_t j, std::size_t m) const {
        std::size_t total = 0;
        for (std::size_t s = 0; s < n_; ++s) total += (*this)(j, m, s);
        return total;
    }

private:
    std::size_t offset(std::size_t j, std::size_t m, std::size_t s) const { return (j * folds_ + m) * n_ + s; }

    std::size_t configurations_, folds_, n_;
    std::vector<std::uint8_t> data_;
};

inline MembershipTensor membership_matrix(const IndexAssignment& a) {
    MembershipTensor t(a.configurations(), a.folds(), a.n());
    for (std::size_t j = 0; j < a.configurations(); ++j)
        for (std::size_t m = 0; m < a.folds(); ++m)
            for (std::uint32_t s : a.set(j, m)) t(j, m, s) = 1;
    return t;
}

/// Writes "j,m,s" membership triples, all 1-based.
inline void write_membership_csv(std::ostream& out, const IndexAssignment& a) {
    out << "j,m,s\n";
    for (std::size_t j = 0; j < a.configurations(); ++j)
        for (std::size_t m = 0; m < a.folds(); ++m)
            for (std::uint32_t s : a.set(j, m)) out << (j + 1) << ',' << (m + 1) << ',' << (s + 1) << '\n';
}

} // namespace reshuffle
