#pragma once

// Limiting covariance parameters of the validation-loss vector.
//
// For configurations i, j the scheme enters the asymptotic covariance through
//
//     tau_{i,j,M} = 1 / (n M^2 alpha^2) * sum_s sum_m sum_m' Pr(s in I_{m,i} and I_{m',j}),
//
// which for every scheme here takes the form sigma^2 (i = j) and
// tau^2 sigma^2 (i != j). This header evaluates that quantity three ways:
// the closed-form table, the exact finite-n probabilities, and Monte Carlo
// over regenerated index sets.
//
// Independent bootstraps per configuration are not generated here. They
// behave like reshuffled n-fold holdout with alpha = 1/n, which gives
// sigma^2 close to 2 and tau^2 close to 1/2.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string_view>
#include <vector>

#include "reshuffle/errors.hpp"
#include "reshuffle/parallel.hpp"
#include "reshuffle/rng.hpp"
#include "reshuffle/splits.hpp"

namespace reshuffle {

/// sigma^2 (variance inflation) and tau^2 (cross-configuration attenuation).
struct CovarianceParams {
    double sigma2 = 1.0;
    double tau2 = 1.0;
};

enum class TauMethod { closed_form, exact_enumeration, monte_carlo };

constexpr std::string_view to_string(TauMethod m) noexcept {
    switch (m) {
        case TauMethod::closed_form: return "closed-form";
        case TauMethod::exact_enumeration: return "exact-enumeration";
        case TauMethod::monte_carlo: return "monte-carlo";
    }
    return "?";
}

enum class Pair { same, distinct };

/// Estimates of tau_{i,i,M} (diag) and tau_{i,j,M}, i != j (offdiag).
/// Standard errors are zero for the analytic methods.
struct TauEstimate {
    double diag = 0.0;
    double offdiag = 0.0;
    double diag_se = 0.0;
    double offdiag_se = 0.0;
    double tau2_se = 0.0; ///< delta-method error of offdiag / diag
    TauMethod method = TauMethod::closed_form;
    std::size_t draws = 0;

    double value(Pair p) const noexcept { return p == Pair::same ? diag : offdiag; }
    double standard_error(Pair p) const noexcept { return p == Pair::same ? diag_se : offdiag_se; }
};

/// Table values evaluated at the nominal alpha and M.
inline CovarianceParams closed_form(const SchemeSpec& spec) {
    spec.validate();
    const double a = spec.alpha;
    const double m = static_cast<double>(spec.folds);
    switch (spec.variant) {
        case Variant::holdout: return {1.0 / a, 1.0};
        case Variant::reshuffled_holdout: return {1.0 / a, a};
        case Variant::mfold_cv:
        case Variant::reshuffled_mfold_cv: return {1.0, 1.0};
        case Variant::mfold_holdout: return {1.0 + (1.0 - a) / (m * a), 1.0};
        case Variant::reshuffled_mfold_holdout: {
            const double s2 = 1.0 + (1.0 - a) / (m * a);
            return {s2, 1.0 / s2};
        }
    }
    return {};
}

/// The finite-n value of the tau sum, using the generators' exact inclusion
/// probabilities. Matches the limit whenever alpha * n is an integer.
inline TauEstimate exact_tau(const SchemeSpec& spec) {
    spec.validate();
    const double n = static_cast<double>(spec.n);
    const double m = static_cast<double>(spec.folds);
    const double norm = n * m * m * spec.alpha * spec.alpha;
    const double p = static_cast<double>(spec.validation_size()) / n; // Pr(s in one holdout set)

    double same = 0.0, distinct = 0.0; // sum over s, m, m'
    switch (spec.variant) {
        case Variant::holdout:
        case Variant::mfold_holdout:
            // shared sets: m = m' overlaps with prob p, independent sets with p^2
            same = distinct = n * (m * p + m * (m - 1.0) * p * p);
            break;
        case Variant::reshuffled_holdout:
        case Variant::reshuffled_mfold_holdout:
            same = n * (m * p + m * (m - 1.0) * p * p);
            distinct = n * m * m * p * p;
            break;
        case Variant::mfold_cv:
            // every index lies in exactly one fold
            same = distinct = n;
            break;
        case Variant::reshuffled_mfold_cv: {
            same = n;
            // independent partitions: sum_m sum_m' (f_m/n)(f_m'/n) = 1 per index
            distinct = n;
            break;
        }
    }
    TauEstimate out;
    out.diag = same / norm;
    out.offdiag = distinct / norm;
    out.method = TauMethod::exact_enumeration;
    return out;
}

namespace detail {

/// Number of folds of one configuration containing each index.
inline void fold_counts(const IndexAssignment& a, std::size_t j, std::vector<std::uint32_t>& counts) {
    std::fill(counts.begin(), counts.end(), 0u);
    for (std::size_t m = 0; m < a.folds(); ++m)
        for (std::uint32_t s : a.set(j, m)) ++counts[s];
}

struct TauSums {
    double same = 0.0, distinct = 0.0;
    double same_sq = 0.0, distinct_sq = 0.0, cross = 0.0;
    std::size_t draws = 0;
};

} // namespace detail

/// Monte-Carlo estimate of the tau sum. Each draw regenerates the index
/// sets of two configurations (fixed variants redraw their shared sets), and
/// sum_m sum_m' 1{s in I_{m,i} and I_{m',j}} = c_i(s) c_j(s) with c the fold
/// counts. Draws are split into fixed-size batches with their own substreams.
inline TauEstimate estimate_tau(const SchemeSpec& spec, std::size_t draws, std::uint64_t seed,
                                const Parallel& parallel = serial()) {
    spec.validate();
    if (draws < 1) throw ConfigError("estimate_tau: draws must be >= 1");
    constexpr std::size_t batch = 4096;
    const std::size_t batches = (draws + batch - 1) / batch;
    std::vector<detail::TauSums> partial(batches);

    const double m = static_cast<double>(spec.folds);
    const double norm = static_cast<double>(spec.n) * m * m * spec.alpha * spec.alpha;

    parallel.for_each(batches, [&](std::size_t b) {
        Stream rng = substream(seed, {b});
        std::vector<std::uint32_t> ci(spec.n), cj(spec.n);
        const std::size_t begin = b * batch;
        const std::size_t end = std::min(draws, begin + batch);
        detail::TauSums acc;
        for (std::size_t d = begin; d < end; ++d) {
            const IndexAssignment a = generate(spec, 2, rng);
            detail::fold_counts(a, 0, ci);
            detail::fold_counts(a, 1, cj);
            double same = 0.0, distinct = 0.0;
            for (std::size_t s = 0; s < spec.n; ++s) {
                same += static_cast<double>(ci[s]) * ci[s];
                distinct += static_cast<double>(ci[s]) * cj[s];
            }
            same /= norm;
            distinct /= norm;
            acc.same += same;
            acc.distinct += distinct;
            acc.same_sq += same * same;
            acc.distinct_sq += distinct * distinct;
            acc.cross += same * distinct;
            ++acc.draws;
        }
        partial[b] = acc;
    });

    detail::TauSums total;
    for (const auto& p : partial) {
        total.same += p.same;
        total.distinct += p.distinct;
        total.same_sq += p.same_sq;
        total.distinct_sq += p.distinct_sq;
        total.cross += p.cross;
        total.draws += p.draws;
    }
    const double r = static_cast<double>(total.draws);
    TauEstimate out;
    out.method = TauMethod::monte_carlo;
    out.draws = total.draws;
    out.diag = total.same / r;
    out.offdiag = total.distinct / r;
    if (total.draws > 1) {
        const double k = r / (r - 1.0);
        const double var_d = std::max(0.0, k * (total.same_sq / r - out.diag * out.diag));
        const double var_o = std::max(0.0, k * (total.distinct_sq / r - out.offdiag * out.offdiag));
        const double cov = k * (total.cross / r - out.diag * out.offdiag);
        out.diag_se = std::sqrt(var_d / r);
        out.offdiag_se = std::sqrt(var_o / r);
        const double ratio = out.offdiag / out.diag;
        const double var_ratio = (var_o - 2.0 * ratio * cov + ratio * ratio * var_d) / (out.diag * out.diag);
        out.tau2_se = std::sqrt(std::max(0.0, var_ratio) / r);
    }
    return out;
}

inline TauEstimate estimate_tau(const SchemeSpec& spec, std::size_t draws, Stream& rng,
                                const Parallel& parallel = serial()) {
    return estimate_tau(spec, draws, rng(), parallel);
}

/// Result of converting (diag, offdiag) into (sigma^2, tau^2).
struct TauConversion {
    CovarianceParams params;
    double raw_ratio = 0.0;
    bool clamped = false;
    bool warning = false; ///< ratio exceeded 1 by more than 3 standard errors
};

/// sigma^2 = diag and tau^2 = offdiag / diag clamped to (0, 1].
inline TauConversion sigma_tau_from_estimates(double diag, double offdiag, double ratio_se = 0.0) {
    if (!(diag > 0.0)) throw EstimationError("sigma_tau_from_estimates: diag must be positive");
    TauConversion out;
    out.raw_ratio = offdiag / diag;
    out.params.sigma2 = diag;
    out.params.tau2 = out.raw_ratio;
    if (out.raw_ratio > 1.0) {
        out.params.tau2 = 1.0;
        out.clamped = true;
        out.warning = out.raw_ratio - 1.0 > 3.0 * ratio_se;
    } else if (out.raw_ratio <= 0.0) {
        out.params.tau2 = std::numeric_limits<double>::min();
        out.clamped = true;
        out.warning = true;
    }
    return out;
}

inline TauConversion sigma_tau_from_estimates(const TauEstimate& e) {
    return sigma_tau_from_estimates(e.diag, e.offdiag, e.tau2_se);
}

} // namespace reshuffle
