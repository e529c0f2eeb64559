#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <vector>

#include "reshuffle/splits.hpp"

using namespace reshuffle;

namespace {

std::set<std::uint32_t> as_set(std::span<const std::uint32_t> s) { return {s.begin(), s.end()}; }

} // namespace

TEST_CASE("variant names round-trip") {
    for (Variant v : all_variants) {
        const auto parsed = parse_variant(to_string(v));
        REQUIRE(parsed);
        CHECK(*parsed == v);
        CHECK(fixed_counterpart(reshuffled_counterpart(v)) == fixed_counterpart(v));
        CHECK(is_reshuffled(reshuffled_counterpart(v)));
        CHECK_FALSE(is_reshuffled(fixed_counterpart(v)));
    }
    CHECK_FALSE(parse_variant("bootstrap"));
}

TEST_CASE("validation size is ceil(alpha n) robust to rounding") {
    CHECK(ceil_fraction(0.1, 30) == 3);
    CHECK(ceil_fraction(0.2, 100) == 20);
    CHECK(ceil_fraction(0.3, 10) == 3);
    CHECK(ceil_fraction(0.25, 10) == 3);
    CHECK(ceil_fraction(1.0 / 3.0, 10) == 4);
}

TEST_CASE("invalid specs name the violated constraint") {
    auto message = [](auto&& fn) {
        try {
            fn();
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK_THAT(message([] { SchemeSpec::make(Variant::holdout, 10, 0.0, 1); }),
               Catch::Matchers::ContainsSubstring("alpha"));
    CHECK_THAT(message([] { SchemeSpec::make(Variant::mfold_holdout, 10, 0.95, 2); }),
               Catch::Matchers::ContainsSubstring("must be < n"));
    CHECK_THAT(message([] { SchemeSpec::make(Variant::mfold_cv, 3, 0.0, 5); }),
               Catch::Matchers::ContainsSubstring("M <= n"));
    CHECK_THAT(message([] { SchemeSpec::make(Variant::mfold_cv, 10, 0.0, 1); }),
               Catch::Matchers::ContainsSubstring("M >= 2"));
    CHECK_THAT(message([] { SchemeSpec::make(Variant::holdout, 1, 0.5, 1); }),
               Catch::Matchers::ContainsSubstring("n must be"));
    SchemeSpec raw{Variant::holdout, 10, 0.5, 2};
    CHECK_THROWS_AS(raw.validate(), ConfigError);
    Stream rng = make_stream(0);
    CHECK_THROWS_AS(generate(SchemeSpec::make(Variant::holdout, 10, 0.5, 1), 0, rng), ConfigError);
}

TEST_CASE("fixed holdout gives J identical sets") {
    Stream rng = make_stream(1);
    const auto spec = SchemeSpec::make(Variant::holdout, 10, 0.5, 1);
    const auto a = generate(spec, 3, rng);
    CHECK(a.folds() == 1);
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(a.set(j, 0).size() == 5);
        CHECK(std::ranges::equal(a.set(j, 0), a.set(0, 0)));
    }
}

TEST_CASE("fixed 5-fold CV on n = 10 partitions into pairs shared across j") {
    Stream rng = make_stream(2);
    const auto a = generate(SchemeSpec::make(Variant::mfold_cv, 10, 0.0, 5), 2, rng);
    std::set<std::uint32_t> all;
    for (std::size_t m = 0; m < 5; ++m) {
        CHECK(a.set(0, m).size() == 2);
        CHECK(std::ranges::equal(a.set(0, m), a.set(1, m)));
        for (auto s : a.set(0, m)) CHECK(all.insert(s).second);
    }
    CHECK(all.size() == 10);
}

TEST_CASE("CV folds are a partition for every n in [2, 200] and M in [2, 10]") {
    Stream rng = make_stream(3);
    for (std::size_t n = 2; n <= 200; ++n) {
        for (std::size_t M = 2; M <= std::min<std::size_t>(10, n); ++M) {
            for (Variant v : {Variant::mfold_cv, Variant::reshuffled_mfold_cv}) {
                const auto a = generate(SchemeSpec::make(v, n, 0.0, M), 3, rng);
                for (std::size_t j = 0; j < 3; ++j) {
                    std::vector<int> hits(n, 0);
                    std::size_t largest = 0, smallest = n;
                    for (std::size_t m = 0; m < M; ++m) {
                        for (auto s : a.set(j, m)) ++hits[s];
                        largest = std::max(largest, a.set(j, m).size());
                        smallest = std::min(smallest, a.set(j, m).size());
                        // first (n mod M) folds carry the extra index
                        REQUIRE(a.set(j, m).size() == n / M + (m < n % M ? 1 : 0));
                    }
                    REQUIRE(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
                    REQUIRE(largest - smallest <= 1);
                }
            }
        }
    }
}

TEST_CASE("membership matrix rows") {
    const auto ho = SchemeSpec::make(Variant::holdout, 4, 0.5, 1);
    const auto a = IndexAssignment::from_sets(ho, 1, {{{0, 1}}});
    const auto t = membership_matrix(a);
    CHECK(t(0, 0, 0) == 1);
    CHECK(t(0, 0, 1) == 1);
    CHECK(t(0, 0, 2) == 0);
    CHECK(t(0, 0, 3) == 0);

    const auto cv = SchemeSpec::make(Variant::mfold_cv, 4, 0.0, 2);
    const auto b = IndexAssignment::from_sets(cv, 1, {{{0, 1}, {2, 3}}});
    const auto u = membership_matrix(b);
    CHECK(u.row_sum(0, 0) == 2);
    CHECK(u.row_sum(0, 1) == 2);
}

TEST_CASE("membership totals equal M times the fold size up to the remainder") {
    Stream rng = make_stream(4);
    for (Variant v : all_variants) {
        const auto spec = SchemeSpec::make(v, 23, 0.2, 4);
        const auto t = membership_matrix(generate(spec, 5, rng));
        for (std::size_t j = 0; j < 5; ++j) {
            std::size_t total = 0;
            for (std::size_t m = 0; m < t.folds(); ++m) total += t.row_sum(j, m);
            if (is_cv(v))
                CHECK(total == 23);
            else
                CHECK(total == spec.folds * spec.validation_size());
        }
    }
}

TEST_CASE("hand-built sets are checked") {
    const auto ho = SchemeSpec::make(Variant::holdout, 4, 0.5, 1);
    CHECK_THROWS_AS(IndexAssignment::from_sets(ho, 1, {{{0, 4}}}), ConfigError);
    CHECK_THROWS_AS(IndexAssignment::from_sets(ho, 1, {{{1, 1}}}), ConfigError);
    CHECK_THROWS_AS(IndexAssignment::from_sets(ho, 3, {{{0}}, {{1}}}), ConfigError);
    CHECK_THROWS_AS(IndexAssignment::from_sets(ho, 1, {{{}}}), ConfigError);
}

TEST_CASE("pairwise overlap of reshuffled holdout sets is alpha squared") {
    Stream rng = make_stream(5);
    const auto spec = SchemeSpec::make(Variant::reshuffled_holdout, 10, 0.5, 1);
    constexpr std::size_t J = 10000;
    const auto a = generate(spec, J, rng);
    // s = 0 in both I_{1,i} and I_{1,i+1}, over disjoint consecutive pairs
    std::size_t hits = 0, trials = 0;
    for (std::size_t i = 0; i + 1 < J; i += 2, ++trials) {
        const auto si = as_set(a.set(i, 0));
        const auto sj = as_set(a.set(i + 1, 0));
        hits += (si.count(0) && sj.count(0)) ? 1 : 0;
    }
    const double p = static_cast<double>(hits) / static_cast<double>(trials);
    const double se = std::sqrt(0.25 * 0.75 / static_cast<double>(trials));
    CHECK(std::abs(p - 0.25) < 3.0 * se);
}

TEST_CASE("inclusion frequency of every index is alpha within 4 standard errors") {
    for (Variant v : {Variant::reshuffled_holdout, Variant::reshuffled_mfold_holdout, Variant::reshuffled_mfold_cv}) {
        Stream rng = make_stream(6);
        const auto spec = SchemeSpec::make(v, 20, 0.25, 4);
        constexpr std::size_t R = 20000;
        const auto a = generate(spec, R, rng);
        std::vector<std::size_t> hits(spec.n, 0);
        for (std::size_t j = 0; j < R; ++j)
            for (auto s : a.set(j, 0)) ++hits[s];
        const double alpha = spec.alpha;
        const double tol = 4.0 * std::sqrt(alpha * (1.0 - alpha) / R);
        for (auto h : hits) CHECK(std::abs(static_cast<double>(h) / R - alpha) < tol);
    }
}

TEST_CASE("fixed and reshuffled variants share the per-configuration marginal") {
    // The fixed draw consumes exactly the stream configuration 0 of the
    // reshuffled draw uses, so configuration 0 is identical, and inclusion
    // frequencies over independent fixed draws match the reshuffled ones.
    for (Variant fixed : {Variant::holdout, Variant::mfold_cv, Variant::mfold_holdout}) {
        const auto fs = SchemeSpec::make(fixed, 15, 0.2, 3);
        const auto rs = SchemeSpec::make(reshuffled_counterpart(fixed), 15, 0.2, 3);
        Stream r1 = make_stream(8), r2 = make_stream(8);
        const auto a = generate(fs, 4, r1);
        const auto b = generate(rs, 4, r2);
        for (std::size_t m = 0; m < a.folds(); ++m) CHECK(std::ranges::equal(a.set(0, m), b.set(0, m)));

        constexpr std::size_t R = 20000;
        std::vector<std::size_t> fixed_hits(15, 0), reshuffled_hits(15, 0);
        Stream rf = make_stream(9), rr = make_stream(10);
        for (std::size_t r = 0; r < R; ++r) {
            const auto draw = generate(fs, 2, rf);
            for (auto s : draw.set(1, 0)) ++fixed_hits[s];
        }
        const auto many = generate(rs, R, rr);
        for (std::size_t r = 0; r < R; ++r)
            for (auto s : many.set(r, 0)) ++reshuffled_hits[s];
        const double p = static_cast<double>(fs.validation_size()) / 15.0;
        const double tol = 4.0 * std::sqrt(2.0 * p * (1.0 - p) / R);
        for (std::size_t s = 0; s < 15; ++s)
            CHECK(std::abs(static_cast<double>(fixed_hits[s]) / R - static_cast<double>(reshuffled_hits[s]) / R) < tol);
    }
}

TEST_CASE("reshuffled M-fold holdout draws the M sets independently") {
    Stream rng = make_stream(12);
    const auto spec = SchemeSpec::make(Variant::reshuffled_mfold_holdout, 10, 0.5, 2);
    constexpr std::size_t R = 20000;
    const auto a = generate(spec, R, rng);
    std::size_t both = 0;
    for (std::size_t j = 0; j < R; ++j)
        both += (as_set(a.set(j, 0)).count(3) && as_set(a.set(j, 1)).count(3)) ? 1 : 0;
    const double p = static_cast<double>(both) / R;
    CHECK(std::abs(p - 0.25) < 4.0 * std::sqrt(0.25 * 0.75 / R));
}

TEST_CASE("identical seeds give identical assignments") {
    for (Variant v : all_variants) {
        const auto spec = SchemeSpec::make(v, 37, 0.2, 5);
        Stream r1 = substream(99, {1}), r2 = substream(99, {1}), r3 = substream(99, {2});
        const auto a = generate(spec, 6, r1);
        const auto b = generate(spec, 6, r2);
        const auto c = generate(spec, 6, r3);
        CHECK(a == b);
        CHECK_FALSE(a == c);
        std::ostringstream sa, sb;
        write_membership_csv(sa, a);
        write_membership_csv(sb, b);
        CHECK(sa.str() == sb.str());
    }
}

TEST_CASE("membership CSV is 1-based") {
    const auto ho = SchemeSpec::make(Variant::holdout, 4, 0.5, 1);
    const auto a = IndexAssignment::from_sets(ho, 2, {{{0, 3}}});
    std::ostringstream out;
    write_membership_csv(out, a);
    CHECK(out.str() == "j,m,s\n1,1,1\n1,1,4\n2,1,1\n2,1,4\n");
}
