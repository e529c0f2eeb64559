#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "reshuffle/tau.hpp"

using namespace reshuffle;
using Catch::Approx;

namespace {

using Counts = std::vector<int>;

// All size-k subsets of {0..n-1} as membership vectors.
std::vector<Counts> subsets(int n, int k) {
    std::vector<Counts> out;
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
        if (std::popcount(mask) != k) continue;
        Counts c(static_cast<std::size_t>(n), 0);
        for (int s = 0; s < n; ++s) c[static_cast<std::size_t>(s)] = (mask >> s) & 1u;
        out.push_back(c);
    }
    return out;
}

// Every equally likely fold-count vector of one configuration, by exhaustive
// enumeration of the generator's sample space.
std::vector<Counts> configurations(Variant v, int n, int k, int M) {
    if (is_cv(v)) {
        // every permutation; folds take consecutive blocks, the first n mod M one longer
        std::vector<int> perm(static_cast<std::size_t>(n));
        std::iota(perm.begin(), perm.end(), 0);
        std::vector<Counts> out;
        do {
            out.emplace_back(static_cast<std::size_t>(n), 1); // each index lies in exactly one fold
        } while (std::next_permutation(perm.begin(), perm.end()));
        return out;
    }
    const auto single = subsets(n, k);
    std::vector<Counts> out{Counts(static_cast<std::size_t>(n), 0)};
    for (int m = 0; m < M; ++m) {
        std::vector<Counts> next;
        for (const auto& partial : out)
            for (const auto& s : single) {
                Counts c = partial;
                for (std::size_t i = 0; i < c.size(); ++i) c[i] += s[i];
                next.push_back(c);
            }
        out = std::move(next);
    }
    return out;
}

struct Brute {
    double diag, offdiag;
};

// Pr-weighted sums by exhaustive enumeration: fixed variants share one
// configuration draw, reshuffled variants draw two independently.
Brute brute_force_tau(Variant v, int n, double alpha, int M, int k) {
    const auto confs = configurations(v, n, k, M);
    const double norm = n * M * M * alpha * alpha;
    double same = 0.0;
    for (const auto& c : confs)
        for (int x : c) same += x * x;
    same /= static_cast<double>(confs.size());
    double distinct = 0.0;
    if (is_reshuffled(v)) {
        for (const auto& a : confs)
            for (const auto& b : confs)
                for (std::size_t s = 0; s < a.size(); ++s) distinct += a[s] * b[s];
        distinct /= static_cast<double>(confs.size() * confs.size());
    } else {
        distinct = same;
    }
    return {same / norm, distinct / norm};
}

} // namespace

TEST_CASE("closed-form table values") {
    auto cf = [](Variant v, double a, std::size_t M) { return closed_form(SchemeSpec::make(v, 100, a, M)); };
    CHECK(cf(Variant::holdout, 0.2, 1).sigma2 == Approx(5.0));
    CHECK(cf(Variant::holdout, 0.2, 1).tau2 == 1.0);
    CHECK(cf(Variant::reshuffled_holdout, 0.2, 1).sigma2 == Approx(5.0));
    CHECK(cf(Variant::reshuffled_holdout, 0.2, 1).tau2 == Approx(0.2));
    CHECK(cf(Variant::reshuffled_mfold_holdout, 0.2, 5).sigma2 == Approx(1.8));
    CHECK(cf(Variant::reshuffled_mfold_holdout, 0.2, 5).tau2 == Approx(1.0 / 1.8));
    CHECK(cf(Variant::mfold_cv, 0.0, 5).sigma2 == 1.0);
    CHECK(cf(Variant::reshuffled_mfold_cv, 0.0, 5).tau2 == 1.0);
}

TEST_CASE("closed-form invariants hold for every scheme") {
    for (Variant v : all_variants)
        for (double a : {0.1, 0.2, 0.5})
            for (std::size_t M : {1u, 2u, 5u, 10u}) {
                if (is_cv(v) && M < 2) continue;
                const auto p = closed_form(SchemeSpec::make(v, 100, a, M));
                CHECK(p.sigma2 >= 1.0);
                CHECK(p.tau2 > 0.0);
                CHECK(p.tau2 <= 1.0);
                // fixed and reshuffled counterparts inflate the variance identically
                const auto q = closed_form(SchemeSpec::make(reshuffled_counterpart(v), 100, a, M));
                CHECK(p.sigma2 == q.sigma2);
            }
}

TEST_CASE("exact probabilities agree with exhaustive enumeration on tiny n") {
    struct Case {
        Variant v;
        int n;
        double alpha;
        int M;
    };
    const std::vector<Case> cases{
        {Variant::holdout, 5, 0.4, 1},           {Variant::reshuffled_holdout, 5, 0.4, 1},
        {Variant::holdout, 6, 0.5, 1},           {Variant::reshuffled_holdout, 5, 0.3, 1}, // ceil(1.5) = 2
        {Variant::mfold_holdout, 5, 0.4, 2},     {Variant::reshuffled_mfold_holdout, 5, 0.4, 2},
        {Variant::mfold_holdout, 4, 0.25, 3},    {Variant::reshuffled_mfold_holdout, 4, 0.5, 2},
        {Variant::mfold_cv, 6, 0.0, 2},          {Variant::reshuffled_mfold_cv, 5, 0.0, 2},
        {Variant::reshuffled_mfold_cv, 6, 0.0, 3},
    };
    for (const auto& c : cases) {
        const auto spec = SchemeSpec::make(c.v, static_cast<std::size_t>(c.n), c.alpha, static_cast<std::size_t>(c.M));
        const auto exact = exact_tau(spec);
        const auto brute = brute_force_tau(c.v, c.n, spec.alpha, c.M, static_cast<int>(spec.validation_size()));
        INFO(to_string(c.v) << " n=" << c.n << " alpha=" << spec.alpha << " M=" << c.M);
        CHECK(exact.diag == Approx(brute.diag).epsilon(1e-12));
        CHECK(exact.offdiag == Approx(brute.offdiag).epsilon(1e-12));
        CHECK(exact.diag_se == 0.0);
        CHECK(exact.method == TauMethod::exact_enumeration);
    }
}

TEST_CASE("exact probabilities reproduce the table when alpha n is integral") {
    for (Variant v : all_variants)
        for (std::size_t n : {20u, 50u, 100u})
            for (double a : {0.1, 0.2, 0.5})
                for (std::size_t M : {1u, 2u, 5u}) {
                    if (is_cv(v) && M < 2) continue;
                    const auto spec = SchemeSpec::make(v, n, a, M);
                    const auto conv = sigma_tau_from_estimates(exact_tau(spec));
                    const auto cf = closed_form(spec);
                    CHECK(conv.params.sigma2 == Approx(cf.sigma2).epsilon(1e-12));
                    CHECK(conv.params.tau2 == Approx(cf.tau2).epsilon(1e-12));
                }
}

TEST_CASE("Monte Carlo matches the closed form across the lattice") {
    std::uint64_t seed = 1000;
    for (Variant v : all_variants)
        for (std::size_t n : {20u, 50u, 100u})
            for (double a : {0.1, 0.2, 0.5})
                for (std::size_t M : {1u, 2u, 5u}) {
                    if (is_single_holdout(v) && M != 1) continue;
                    if (is_cv(v) && (M < 2 || a != 0.1)) continue; // alpha is implied by M
                    const auto spec = SchemeSpec::make(v, n, a, M);
                    const auto mc = estimate_tau(spec, 100000, seed++);
                    const auto conv = sigma_tau_from_estimates(mc);
                    const auto cf = closed_form(spec);
                    INFO(to_string(v) << " n=" << n << " alpha=" << spec.alpha << " M=" << M);
                    CHECK(mc.method == TauMethod::monte_carlo);
                    CHECK(mc.draws == 100000);
                    const double ds = std::abs(conv.params.sigma2 - cf.sigma2);
                    const double dt = std::abs(conv.params.tau2 - cf.tau2);
                    CHECK(ds <= 3.0 * mc.diag_se + 1e-12 * cf.sigma2);
                    CHECK(dt <= 3.0 * mc.tau2_se + 1e-12);
                    CHECK(ds <= 0.02 * cf.sigma2);
                    CHECK(dt <= 0.02 * cf.tau2);
                }
}

TEST_CASE("Monte Carlo standard errors are positive whenever the statistic varies") {
    const auto ho = estimate_tau(SchemeSpec::make(Variant::reshuffled_mfold_holdout, 20, 0.2, 2), 5000, 3);
    CHECK(ho.diag_se > 0.0);
    CHECK(ho.offdiag_se > 0.0);
    CHECK(ho.tau2_se > 0.0);
    // single holdout and CV statistics are constant per draw on the diagonal
    const auto cv = estimate_tau(SchemeSpec::make(Variant::mfold_cv, 20, 0.0, 5), 5000, 3);
    CHECK(cv.diag_se == 0.0);
    CHECK(cv.diag == Approx(1.0));
}

TEST_CASE("small reshuffled holdout and CV examples") {
    const auto rh = SchemeSpec::make(Variant::reshuffled_holdout, 10, 0.5, 1);
    const auto ex = exact_tau(rh);
    CHECK(ex.value(Pair::same) == Approx(2.0));
    CHECK(ex.value(Pair::distinct) == Approx(1.0));
    const auto mc = estimate_tau(rh, 200000, 17);
    CHECK(mc.value(Pair::same) == Approx(2.0));
    CHECK(std::abs(mc.value(Pair::distinct) - 1.0) < 3.0 * mc.standard_error(Pair::distinct));

    for (std::size_t n : {10u, 25u, 40u}) {
        const auto cv = estimate_tau(SchemeSpec::make(Variant::reshuffled_mfold_cv, n, 0.0, 5), 20000, n);
        CHECK(cv.offdiag == Approx(1.0).epsilon(0.03));
        CHECK(exact_tau(SchemeSpec::make(Variant::mfold_cv, n, 0.0, 5)).offdiag == Approx(1.0));
    }
}

TEST_CASE("tau^2 of reshuffled M-fold holdout rises to 1 with M") {
    double prev_closed = 0.0, prev_exact = 0.0;
    for (std::size_t M = 1; M <= 50; ++M) {
        const auto spec = SchemeSpec::make(Variant::reshuffled_mfold_holdout, 100, 0.2, M);
        const double closed = closed_form(spec).tau2;
        const double exact = sigma_tau_from_estimates(exact_tau(spec)).params.tau2;
        CHECK(closed > prev_closed);
        CHECK(exact > prev_exact);
        CHECK(closed < 1.0);
        prev_closed = closed;
        prev_exact = exact;
    }
    CHECK(prev_closed > 0.9);
}

TEST_CASE("Monte Carlo is reproducible and thread-count independent") {
    const auto spec = SchemeSpec::make(Variant::reshuffled_mfold_holdout, 30, 0.2, 3);
    const auto a = estimate_tau(spec, 20000, 5, Parallel(1));
    const auto b = estimate_tau(spec, 20000, 5, Parallel(4));
    CHECK(a.diag == b.diag);
    CHECK(a.offdiag == b.offdiag);
    CHECK(a.tau2_se == b.tau2_se);
    CHECK_THROWS_AS(estimate_tau(spec, 0, 5), ConfigError);
}

TEST_CASE("converting estimates to sigma^2 and tau^2") {
    auto p = sigma_tau_from_estimates(5.0, 1.0).params;
    CHECK(p.sigma2 == 5.0);
    CHECK(p.tau2 == Approx(0.2));
    p = sigma_tau_from_estimates(1.0, 1.0).params;
    CHECK(p.sigma2 == 1.0);
    CHECK(p.tau2 == 1.0);
    CHECK(sigma_tau_from_estimates(1.8, 1.0).params.tau2 == Approx(0.5556).epsilon(1e-4));

    CHECK_THROWS_AS(sigma_tau_from_estimates(0.0, 1.0), EstimationError);
    CHECK_THROWS_AS(sigma_tau_from_estimates(-1.0, 1.0), EstimationError);

    const auto small_overshoot = sigma_tau_from_estimates(1.0, 1.001, 0.01);
    CHECK(small_overshoot.clamped);
    CHECK_FALSE(small_overshoot.warning);
    CHECK(small_overshoot.params.tau2 == 1.0);
    CHECK(small_overshoot.raw_ratio == Approx(1.001));

    const auto large_overshoot = sigma_tau_from_estimates(1.0, 1.2, 0.01);
    CHECK(large_overshoot.clamped);
    CHECK(large_overshoot.warning);

    const auto negative = sigma_tau_from_estimates(1.0, -0.1);
    CHECK(negative.clamped);
    CHECK(negative.params.tau2 > 0.0);
}
