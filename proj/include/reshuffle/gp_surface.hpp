#pragma once

// Simulated HPO on a univariate quadratic loss surface.
//
// The observed objective is mu_hat(lambda) = mu(lambda) + eps(lambda) with
// mu(lambda) = m (lambda - minimizer)^2 / 2 and eps a zero-mean Gaussian
// vector over the grid whose covariance is K(l, l) on the diagonal and
// tau^2 K(l, l') off it, K squared-exponential. Each replication selects
// argmin mu_hat and records the true risk of the selection.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "reshuffle/errors.hpp"
#include "reshuffle/format.hpp"
#include "reshuffle/parallel.hpp"
#include "reshuffle/rng.hpp"
#include "reshuffle/stats.hpp"

namespace reshuffle::gp {

struct SurfaceSpec {
    double m = 1.0;         ///< curvature
    double minimizer = 0.5; ///< lambda* with mu(lambda*) = 0
    std::vector<double> grid;

    double mu(double lambda) const noexcept {
        const double d = lambda - minimizer;
        return m * d * d / 2.0;
    }

    void validate() const {
        if (!(m >= 0.0) || !std::isfinite(m)) throw ConfigError("surface: curvature m must be a nonnegative finite number");
        if (!std::isfinite(minimizer)) throw ConfigError("surface: minimizer must be finite");
        if (grid.size() < 2) throw ConfigError("surface: grid needs at least 2 points");
        for (std::size_t i = 0; i < grid.size(); ++i) {
            if (!(grid[i] >= 0.0 && grid[i] <= 1.0)) throw ConfigError("surface: grid values must lie in [0, 1]");
            if (i > 0 && !(grid[i] > grid[i - 1])) throw ConfigError("surface: grid must be strictly increasing");
        }
    }
};

/// J equally spaced points on [0, 1] including both endpoints.
inline std::vector<double> uniform_grid(std::size_t points) {
    if (points < 2) throw ConfigError("uniform_grid: need at least 2 points");
    std::vector<double> g(points);
    for (std::size_t i = 0; i < points; ++i) g[i] = static_cast<double>(i) / static_cast<double>(points - 1);
    return g;
}

/// Squared-exponential kernel sigma_k2 * exp(-kappa (l - l')^2 / 2) with the
/// reshuffling factor tau applied to off-diagonal covariances.
struct NoiseModel {
    double sigma_k2 = 1.0;
    double kappa = 1.0;
    double tau = 1.0;

    double kernel(double a, double b) const noexcept {
        const double d = a - b;
        return sigma_k2 * std::exp(-kappa * d * d / 2.0);
    }

    void validate() const {
        if (!(sigma_k2 >= 0.0) || !std::isfinite(sigma_k2)) throw ConfigError("noise: sigma_k2 must be nonnegative and finite");
        if (!(kappa >= 0.0) || !std::isfinite(kappa)) throw ConfigError("noise: kappa must be nonnegative and finite");
        if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("noise: tau must lie in [0, 1]");
    }
};

struct SimulationConfig {
    SurfaceSpec surface;
    NoiseModel noise;
    std::size_t replications = 10000;
    std::uint64_t seed = 0;

    void validate() const {
        surface.validate();
        noise.validate();
        if (replications < 1) throw ConfigError("simulation: replications must be >= 1");
    }
};

struct SimulationSummary {
    double mean_true_risk = 0.0;
    double standard_error = 0.0;
    std::size_t replications = 0;
    double jitter = 0.0;
    bool degenerate = false; ///< a single replication, so no standard error
};

/// Exact covariance entries plus the lower Cholesky factor of cov + jitter I.
struct Covariance {
    Eigen::MatrixXd matrix;
    Eigen::MatrixXd factor;
    double jitter = 0.0;
};

inline constexpr double jitter_start = 1e-10;
inline constexpr double jitter_max = 1e-6;

/// Factorizes cov + jitter I, starting at 1e-10 max|diag| and escalating by
/// 10x up to 1e-6 max|diag|. An all-zero matrix factors to zero without jitter.
inline Covariance factorize(Eigen::MatrixXd cov) {
    Covariance out;
    const Eigen::Index size = cov.rows();
    const double max_diag = size > 0 ? cov.diagonal().cwiseAbs().maxCoeff() : 0.0;
    if (max_diag == 0.0 && cov.cwiseAbs().maxCoeff() == 0.0) {
        out.factor = Eigen::MatrixXd::Zero(size, size);
        out.matrix = std::move(cov);
        return out;
    }
    for (double rel = jitter_start; rel <= jitter_max * (1.0 + 1e-9); rel *= 10.0) {
        const double jitter = rel * max_diag;
        Eigen::MatrixXd shifted = cov;
        shifted.diagonal().array() += jitter;
        Eigen::LLT<Eigen::MatrixXd> llt(shifted);
        if (llt.info() == Eigen::Success) {
            out.factor = llt.matrixL();
            out.jitter = jitter;
            out.matrix = std::move(cov);
            return out;
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov, Eigen::EigenvaluesOnly);
    const auto& ev = eig.eigenvalues();
    std::ostringstream msg;
    msg << "covariance factorization failed up to jitter " << jitter_max * max_diag << "; eigenvalues in ["
        << ev.minCoeff() << ", " << ev.maxCoeff() << "], condition estimate "
        << (ev.minCoeff() > 0.0 ? ev.maxCoeff() / ev.minCoeff() : std::numeric_limits<double>::infinity());
    throw NumericalError(msg.str());
}

/// Builds C with C_ii = K(l_i, l_i) and C_ij = tau^2 K(l_i, l_j), then factorizes.
inline Covariance build_covariance(const SurfaceSpec& surface, const NoiseModel& noise) {
    surface.validate();
    noise.validate();
    const auto size = static_cast<Eigen::Index>(surface.grid.size());
    const double t2 = noise.tau * noise.tau;
    Eigen::MatrixXd cov(size, size);
    for (Eigen::Index i = 0; i < size; ++i) {
        cov(i, i) = noise.kernel(surface.grid[i], surface.grid[i]);
        for (Eigen::Index j = i + 1; j < size; ++j) {
            const double c = t2 * noise.kernel(surface.grid[i], surface.grid[j]);
            cov(i, j) = c;
            cov(j, i) = c;
        }
    }
    return factorize(std::move(cov));
}

inline Eigen::VectorXd true_risk(const SurfaceSpec& surface) {
    Eigen::VectorXd mu(static_cast<Eigen::Index>(surface.grid.size()));
    for (std::size_t i = 0; i < surface.grid.size(); ++i) mu[static_cast<Eigen::Index>(i)] = surface.mu(surface.grid[i]);
    return mu;
}

/// eps = L z with z standard normal.
inline Eigen::VectorXd sample_noise(const Covariance& cov, Stream& rng) {
    StandardNormal normal;
    Eigen::VectorXd z(cov.factor.rows());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
    return cov.factor.triangularView<Eigen::Lower>() * z;
}

/// mu(lambda_j) + eps_j for one draw of the noise process.
inline Eigen::VectorXd sample_observed_loss(const SimulationConfig& config, const Covariance& cov, Stream& rng) {
    return true_risk(config.surface) + sample_noise(cov, rng);
}

inline Eigen::VectorXd sample_observed_loss(const SimulationConfig& config, Stream& rng) {
    config.validate();
    return sample_observed_loss(config, build_covariance(config.surface, config.noise), rng);
}

/// Index of the smallest entry; ties go to the lowest index.
inline std::size_t argmin(const Eigen::VectorXd& v) {
    std::size_t best = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i)
        if (v[i] < v[static_cast<Eigen::Index>(best)]) best = static_cast<std::size_t>(i);
    return best;
}

inline constexpr std::size_t replication_batch = 512;

/// True risks of the selected configuration, one per replication. Batches
/// of replications draw from substreams keyed by (seed, cell, batch).
inline std::vector<double> selected_risks(const SimulationConfig& config, const Covariance& cov,
                                          std::uint64_t cell = 0, const Parallel& parallel = serial()) {
    const Eigen::VectorXd mu = true_risk(config.surface);
    std::vector<double> risks(config.replications);
    const std::size_t batches = (config.replications + replication_batch - 1) / replication_batch;
    parallel.for_each(batches, [&](std::size_t b) {
        Stream rng = substream(config.seed, {tag(StreamTag::noise), cell, b});
        const std::size_t end = std::min(config.replications, (b + 1) * replication_batch);
        for (std::size_t r = b * replication_batch; r < end; ++r) {
            const Eigen::VectorXd observed = mu + sample_noise(cov, rng);
            risks[r] = mu[static_cast<Eigen::Index>(argmin(observed))];
        }
    });
    return risks;
}

inline SimulationSummary run_study(const SimulationConfig& config, std::uint64_t cell = 0,
                                   const Parallel& parallel = serial()) {
    config.validate();
    const Covariance cov = build_covariance(config.surface, config.noise);
    const auto risks = selected_risks(config, cov, cell, parallel);
    const auto ms = stats::mean_se(risks);
    SimulationSummary out;
    out.mean_true_risk = ms.mean;
    out.standard_error = ms.standard_error;
    out.replications = config.replications;
    out.jitter = cov.jitter;
    out.degenerate = config.replications < 2;
    return out;
}

struct SweepGrid {
    std::vector<double> m{0.5, 1.0, 2.0, 4.0};
    std::vector<double> kappa{0.1, 1.0, 10.0, 100.0};
    std::vector<double> tau{0.2, 0.4, 0.6, 0.8, 1.0};

    std::size_t cells() const noexcept { return m.size() * kappa.size() * tau.size(); }
};

struct SweepRow {
    double m = 0.0, kappa = 0.0, tau = 0.0;
    SimulationSummary summary;
};

/// Raised when one sweep cell fails numerically; names the cell.
class CellError : public NumericalError {
public:
    CellError(std::size_t cell, double m, double kappa, double tau, const std::string& what)
        : NumericalError("cell " + std::to_string(cell) + " (m=" + format_double(m) + ", kappa=" + format_double(kappa) +
                         ", tau=" + format_double(tau) + "): " + what),
          cell_(cell) {}
    std::size_t cell() const noexcept { return cell_; }

private:
    std::size_t cell_;
};

/// One summary per (m, kappa, tau) cell, in m-major, then kappa, then tau order.
/// Cell c uses the substreams of run_study(cell = c), so a 1x1x1 sweep
/// reproduces run_study exactly.
inline std::vector<SweepRow> sweep(const SweepGrid& grid, const SimulationConfig& base, const Parallel& parallel = serial()) {
    if (grid.m.empty() || grid.kappa.empty() || grid.tau.empty()) throw ConfigError("sweep: parameter grids must be nonempty");
    base.validate();
    std::vector<SweepRow> rows;
    rows.reserve(grid.cells());
    std::size_t cell = 0;
    for (double m : grid.m) {
        for (double kappa : grid.kappa) {
            for (double tau : grid.tau) {
                SimulationConfig cfg = base;
                cfg.surface.m = m;
                cfg.noise.kappa = kappa;
                cfg.noise.tau = tau;
                try {
                    rows.push_back({m, kappa, tau, run_study(cfg, cell, parallel)});
                } catch (const ConfigError&) {
                    throw;
                } catch (const NumericalError& e) {
                    throw CellError(cell, m, kappa, tau, e.what());
                }
                ++cell;
            }
        }
    }
    return rows;
}

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows, const SimulationConfig& base) {
    out << "m,kappa,tau,sigmaK2,J,replications,mean_true_risk,stderr,jitter,seed\n";
    for (const auto& r : rows) {
        out << format_double(r.m) << ',' << format_double(r.kappa) << ',' << format_double(r.tau) << ','
            << format_double(base.noise.sigma_k2) << ',' << base.surface.grid.size() << ',' << r.summary.replications << ','
            << format_double(r.summary.mean_true_risk) << ',' << format_double(r.summary.standard_error) << ','
            << format_double(r.summary.jitter) << ',' << base.seed << '\n';
    }
}

} // namespace reshuffle::gp
