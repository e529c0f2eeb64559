#pragma once

// Expected-regret bound for selecting argmin mu_hat over a finite grid under
// the Gaussian-process noise model, and grid-based estimators of the
// constants it depends on.
//
//     E[mu(l_hat) - mu(l*)] <= sigma sqrt(d) [8 + B(tau) - A(tau)]
//     B(tau) = 48 [sqrt(1 - tau^2) sqrt(log J) + tau sqrt(1 + log(3 kappa)_+)]
//     A(tau) = sqrt(1 - tau^2) (sigma_lower / sigma) sqrt(log(sigma / (2 m eta^2))_+)
//
// Here sigma is the noise standard-deviation bound, not the variance
// inflation of the tau module. The constants are worst-case; B is reported
// uncapped even though a sharper analysis caps its growth at sqrt(log J).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "reshuffle/errors.hpp"
#include "reshuffle/format.hpp"
#include "reshuffle/parallel.hpp"
#include "reshuffle/rng.hpp"

namespace reshuffle::regret {

/// log(x)_+ = max(0, log x); zero for x <= 1 including x = 0.
inline double log_plus(double x) noexcept { return x > 1.0 ? std::log(x) : 0.0; }

struct RegretInputs {
    double sigma = 1.0;
    double sigma_lower = 1.0;
    double tau = 1.0;
    double kappa = 1.0;
    double m = 1.0;
    double eta = 0.1;
    std::size_t d = 1;
    std::size_t J = 2;

    void validate() const {
        if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("regret: sigma must be positive");
        if (!(sigma_lower > 0.0)) throw ConfigError("regret: sigma_lower must be positive");
        if (sigma_lower > sigma) throw ConfigError("regret: sigma_lower must not exceed sigma");
        if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("regret: tau must lie in [0, 1]");
        if (!(kappa >= 0.0) || !std::isfinite(kappa)) throw ConfigError("regret: kappa must be nonnegative and finite");
        if (!(m >= 0.0) || !std::isfinite(m)) throw ConfigError("regret: m must be nonnegative and finite");
        if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("regret: eta must be positive");
        if (d < 1) throw ConfigError("regret: d must be >= 1");
        if (J < 2) throw ConfigError("regret: J must be >= 2");
    }
};

struct RegretBreakdown {
    double A = 0.0;
    double B = 0.0;
    double bound = 0.0;
    std::vector<std::string> flags;
};

inline double term_B(double tau, double kappa, std::size_t J) {
    return 48.0 * (std::sqrt(1.0 - tau * tau) * std::sqrt(std::log(static_cast<double>(J))) +
                   tau * std::sqrt(1.0 + log_plus(3.0 * kappa)));
}

inline double term_A(double tau, double sigma, double sigma_lower, double m, double eta) {
    return std::sqrt(1.0 - tau * tau) * (sigma_lower / sigma) * std::sqrt(log_plus(sigma / (2.0 * m * eta * eta)));
}

/// The bound requires m > 0; m = 0 reports A = 0 with the "degenerate_m" flag.
inline RegretBreakdown bound(const RegretInputs& in) {
    in.validate();
    RegretBreakdown out;
    out.B = term_B(in.tau, in.kappa, in.J);
    if (in.m == 0.0) {
        out.A = 0.0;
        out.flags.emplace_back("degenerate_m");
    } else {
        out.A = term_A(in.tau, in.sigma, in.sigma_lower, in.m, in.eta);
    }
    if (in.sigma / (2.0 * in.m * in.eta * in.eta) <= 1.0) out.flags.emplace_back("A_zero_high_signal");
    out.bound = in.sigma * std::sqrt(static_cast<double>(in.d)) * (8.0 + out.B - out.A);
    return out;
}

/// Points in R^d stored row-major.
class PointSet {
public:
    PointSet(std::size_t dim, std::vector<double> coords) : dim_(dim), coords_(std::move(coords)) {
        if (dim_ < 1) throw ConfigError("point set: dimension must be >= 1");
        if (coords_.size() % dim_ != 0) throw ConfigError("point set: coordinate count is not a multiple of the dimension");
    }

    static PointSet line(std::span<const double> xs) { return PointSet(1, std::vector<double>(xs.begin(), xs.end())); }

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return coords_.size() / dim_; }
    std::span<const double> operator[](std::size_t i) const { return {coords_.data() + i * dim_, dim_}; }

private:
    std::size_t dim_;
    std::vector<double> coords_;
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    return s;
}

using Kernel = std::function<double(std::span<const double>, std::span<const double>)>;

/// max over distinct grid pairs of |K(l,l) - K(l,l')| / (K(l,l) |l - l'|^2).
/// A grid maximum, hence a lower bound on the supremum over the unit ball;
/// refine the grid to tighten it.
inline double estimate_kappa(const Kernel& kernel, const PointSet& grid) {
    if (grid.size() < 2) throw DomainError("estimate_kappa: need at least two grid points");
    double best = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double kii = kernel(grid[i], grid[i]);
        if (!(kii > 0.0)) throw DomainError("estimate_kappa: K(l, l) must be positive on the grid");
        for (std::size_t j = 0; j < grid.size(); ++j) {
            if (i == j) continue;
            const double r2 = squared_distance(grid[i], grid[j]);
            if (r2 == 0.0) continue;
            best = std::max(best, std::abs(kii - kernel(grid[i], grid[j])) / (kii * r2));
        }
    }
    return best;
}

struct CurvatureEstimate {
    double m = 0.0;
    std::size_t minimizer = 0;
    bool degenerate = false; ///< surface constant on the grid
};

/// sup over grid points l != l* of |mu(l) - mu(l*)| / |l - l*|^2, with l*
/// the grid minimizer (lowest index on ties).
inline CurvatureEstimate estimate_m(std::span<const double> mu, const PointSet& grid) {
    if (mu.size() != grid.size()) throw ConfigError("estimate_m: one surface value per grid point required");
    if (grid.size() < 2) throw DomainError("estimate_m: need at least two grid points");
    CurvatureEstimate out;
    out.minimizer = static_cast<std::size_t>(std::min_element(mu.begin(), mu.end()) - mu.begin());
    const double mu_star = mu[out.minimizer];
    bool all_equal = true;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (i == out.minimizer) continue;
        if (mu[i] != mu_star) all_equal = false;
        const double r2 = squared_distance(grid[i], grid[out.minimizer]);
        if (r2 == 0.0) continue;
        out.m = std::max(out.m, std::abs(mu[i] - mu_star) / r2);
    }
    out.degenerate = all_equal;
    if (all_equal) out.m = 0.0;
    return out;
}

/// Uniform point in the closed unit ball of R^d.
inline void uniform_in_ball(Stream& rng, std::span<double> out) {
    const std::size_t d = out.size();
    if (d == 1) {
        out[0] = uniform(rng, -1.0, 1.0);
        return;
    }
    StandardNormal normal;
    double norm2 = 0.0;
    do {
        norm2 = 0.0;
        for (double& x : out) {
            x = normal(rng);
            norm2 += x * x;
        }
    } while (norm2 == 0.0);
    const double radius = std::pow(uniform01(rng), 1.0 / static_cast<double>(d));
    const double scale = radius / std::sqrt(norm2);
    for (double& x : out) x *= scale;
}

inline PointSet random_points_in_ball(std::size_t count, std::size_t dim, Stream& rng) {
    std::vector<double> coords(count * dim);
    for (std::size_t i = 0; i < count; ++i) uniform_in_ball(rng, std::span(coords).subspan(i * dim, dim));
    return PointSet(dim, std::move(coords));
}

namespace detail {

/// Nearest-point distance queries; sorted search in 1-d, brute force otherwise.
class NearestPoint {
public:
    explicit NearestPoint(const PointSet& points) : points_(points) {
        if (points.dim() == 1) {
            sorted_.reserve(points.size());
            for (std::size_t i = 0; i < points.size(); ++i) sorted_.push_back(points[i][0]);
            std::sort(sorted_.begin(), sorted_.end());
        }
    }

    double distance(std::span<const double> c) const {
        if (!sorted_.empty()) {
            const auto it = std::lower_bound(sorted_.begin(), sorted_.end(), c[0]);
            double best = std::numeric_limits<double>::infinity();
            if (it != sorted_.end()) best = *it - c[0];
            if (it != sorted_.begin()) best = std::min(best, c[0] - *(it - 1));
            return best;
        }
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < points_.size(); ++i) best = std::min(best, squared_distance(points_[i], c));
        return std::sqrt(best);
    }

private:
    const PointSet& points_;
    std::vector<double> sorted_;
};

} // namespace detail

inline constexpr int eta_bisection_steps = 50;

/// Monte-Carlo covering-radius estimate. For probe directions u drawn
/// uniformly in the unit ball, the ball of radius r centred at (1 - r) u lies
/// inside the unit ball; the predicate "that ball contains a point" is
/// monotone in r, so the smallest admissible r over all probes is found by
/// bisection. Unprobed regions can only raise the true value, so this is a
/// lower bound on eta that increases towards it as probes grow.
inline double estimate_eta(const PointSet& points, std::size_t probes, std::uint64_t seed,
                           const Parallel& parallel = serial()) {
    if (points.size() == 0) throw DomainError("estimate_eta: empty point set");
    if (probes < 1) throw ConfigError("estimate_eta: probes must be >= 1");
    for (std::size_t i = 0; i < points.size(); ++i) {
        double r2 = 0.0;
        for (double x : points[i]) r2 += x * x;
        if (r2 > 1.0 + 1e-12) throw DomainError("estimate_eta: points must lie in the unit ball");
    }

    const detail::NearestPoint nearest(points);
    const std::size_t dim = points.dim();
    constexpr std::size_t batch = 4096;
    const std::size_t batches = (probes + batch - 1) / batch;
    std::vector<double> worst(batches, 0.0);

    parallel.for_each(batches, [&](std::size_t b) {
        Stream rng = substream(seed, {tag(StreamTag::probes), b});
        std::vector<double> u(dim), c(dim);
        const std::size_t end = std::min(probes, (b + 1) * batch);
        double local = 0.0;
        for (std::size_t p = b * batch; p < end; ++p) {
            uniform_in_ball(rng, u);
            // Only radii above the current worst can change the maximum.
            auto covered = [&](double r) {
                for (std::size_t k = 0; k < dim; ++k) c[k] = (1.0 - r) * u[k];
                return nearest.distance(c) <= r;
            };
            if (covered(local)) continue;
            double lo = local, hi = 1.0;
            for (int step = 0; step < eta_bisection_steps; ++step) {
                const double mid = 0.5 * (lo + hi);
                (covered(mid) ? hi : lo) = mid;
            }
            local = hi;
        }
        worst[b] = local;
    });
    return *std::max_element(worst.begin(), worst.end());
}

inline void write_tau_sweep_csv(std::ostream& out, const RegretInputs& base, std::size_t points) {
    if (points < 2) throw ConfigError("tau sweep: need at least 2 points");
    out << "tau,A,B,bound\n";
    for (std::size_t i = 0; i < points; ++i) {
        RegretInputs in = base;
        in.tau = static_cast<double>(i) / static_cast<double>(points - 1);
        const auto r = bound(in);
        out << format_double(in.tau) << ',' << format_double(r.A) << ',' << format_double(r.B) << ','
            << format_double(r.bound) << '\n';
    }
}

} // namespace reshuffle::regret
