#pragma once

// Monte-Carlo checks of the resampling covariance structure with a learner
// whose true risk is known in closed form, and a random-search harness that
// tracks incumbents under fixed or reshuffled splits.
//
// Task: each observation carries one response per configuration column,
// Y_{i,c} = theta + s W_{i,c} with W_i ~ N(0, R) and
// R_{c,c'} = exp(-column_kappa (lambda_c - lambda_c')^2 / 2). Configuration j
// is the shrinkage-mean predictor h = lambda_j * mean_T(Y_{., c(j)}) scored
// by squared error on column c(j). With column_kappa = 0 all configurations
// share one response column, which is the plain scalar N(theta, s^2) task.
//
// True risk of configuration j when trained on the full dataset of size n:
//     mu(lambda) = s^2 + theta^2 (1 - lambda)^2 + lambda^2 s^2 / n.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "reshuffle/errors.hpp"
#include "reshuffle/format.hpp"
#include "reshuffle/gp_surface.hpp"
#include "reshuffle/parallel.hpp"
#include "reshuffle/rng.hpp"
#include "reshuffle/splits.hpp"
#include "reshuffle/stats.hpp"
#include "reshuffle/tau.hpp"

namespace reshuffle::empirics {

struct TractableTask {
    std::size_t n = 200;
    double theta = 0.2;
    double noise_sd = 1.0;
    std::vector<double> grid{0.5, 1.0, 1.5}; ///< shrinkage factors lambda_j
    double column_kappa = 0.0;

    std::size_t configurations() const noexcept { return grid.size(); }
    bool shared_column() const noexcept { return column_kappa == 0.0; }
    std::size_t columns() const noexcept { return shared_column() ? 1 : grid.size(); }
    std::size_t column_of(std::size_t j) const noexcept { return shared_column() ? 0 : j; }

    /// Closed-form true risk; depends only on the task, never on a split.
    double true_risk(std::size_t j) const noexcept {
        const double l = grid[j];
        const double s2 = noise_sd * noise_sd;
        return s2 + theta * theta * (1.0 - l) * (1.0 - l) + l * l * s2 / static_cast<double>(n);
    }

    void validate() const {
        if (n < 2) throw ConfigError("task: n must be >= 2");
        if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) throw ConfigError("task: noise_sd must be nonnegative");
        if (!std::isfinite(theta)) throw ConfigError("task: theta must be finite");
        if (grid.empty()) throw ConfigError("task: grid must be nonempty");
        if (!(column_kappa >= 0.0) || !std::isfinite(column_kappa)) throw ConfigError("task: column_kappa must be nonnegative");
        for (double l : grid)
            if (!std::isfinite(l)) throw ConfigError("task: grid values must be finite");
    }

    /// n = 200, shared column, three shrinkage levels: the covariance-check task.
    static TractableTask covariance_default() { return {}; }

    /// Flat true risk, noisy and weakly correlated validation losses: 200
    /// shrinkage levels on [0, 2] with column_kappa = 2.5.
    static TractableTask low_signal() {
        TractableTask t;
        t.n = 100;
        t.theta = 0.2;
        t.noise_sd = 1.0;
        t.column_kappa = 2.5;
        t.grid.resize(200);
        for (std::size_t i = 0; i < t.grid.size(); ++i) t.grid[i] = 2.0 * static_cast<double>(i) / 199.0;
        return t;
    }
};

/// Column-major responses, n rows by `columns` columns, with cached column sums.
class Dataset {
public:
    Dataset(std::size_t n, std::size_t columns, std::vector<double> values)
        : n_(n), columns_(columns), values_(std::move(values)), sums_(columns, 0.0) {
        if (values_.size() != n_ * columns_) throw ConfigError("dataset: value count does not match n * columns");
        for (std::size_t c = 0; c < columns_; ++c)
            for (double y : column(c)) sums_[c] += y;
    }

    std::size_t n() const noexcept { return n_; }
    std::size_t columns() const noexcept { return columns_; }
    std::span<const double> column(std::size_t c) const { return {values_.data() + c * n_, n_}; }
    double column_sum(std::size_t c) const { return sums_[c]; }

private:
    std::size_t n_, columns_;
    std::vector<double> values_;
    std::vector<double> sums_;
};

/// A task plus the factor of its response correlation, built once.
class TaskModel {
public:
    explicit TaskModel(TractableTask task) : task_(std::move(task)) {
        task_.validate();
        if (!task_.shared_column()) {
            const auto c = static_cast<Eigen::Index>(task_.columns());
            Eigen::MatrixXd corr(c, c);
            for (Eigen::Index a = 0; a < c; ++a)
                for (Eigen::Index b = 0; b < c; ++b) {
                    const double d = task_.grid[static_cast<std::size_t>(a)] - task_.grid[static_cast<std::size_t>(b)];
                    corr(a, b) = std::exp(-task_.column_kappa * d * d / 2.0);
                }
            factor_ = gp::factorize(std::move(corr)).factor;
        }
    }

    const TractableTask& task() const noexcept { return task_; }

    Dataset draw(Stream& rng) const {
        const std::size_t n = task_.n;
        const std::size_t cols = task_.columns();
        std::vector<double> values(n * cols);
        StandardNormal normal;
        if (task_.shared_column()) {
            for (std::size_t i = 0; i < n; ++i) values[i] = task_.theta + task_.noise_sd * normal(rng);
        } else {
            Eigen::VectorXd z(static_cast<Eigen::Index>(cols));
            for (std::size_t i = 0; i < n; ++i) {
                for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = normal(rng);
                const Eigen::VectorXd w = factor_.triangularView<Eigen::Lower>() * z;
                for (std::size_t c = 0; c < cols; ++c)
                    values[c * n + i] = task_.theta + task_.noise_sd * w[static_cast<Eigen::Index>(c)];
            }
        }
        return Dataset(n, cols, std::move(values));
    }

private:
    TractableTask task_;
    Eigen::MatrixXd factor_;
};

/// Mean over folds of the validation MSE of configuration j trained on each
/// fold's complement.
template <class FoldAt>
double fold_average_loss(const TractableTask& task, const Dataset& data, std::size_t j, std::size_t folds, FoldAt&& fold_at) {
    const std::size_t c = task.column_of(j);
    const auto y = data.column(c);
    const double total = data.column_sum(c);
    double sum = 0.0;
    for (std::size_t m = 0; m < folds; ++m) {
        const std::span<const std::uint32_t> v = fold_at(m);
        if (v.size() >= data.n()) throw ConfigError("validation_loss: empty training complement");
        double sum_v = 0.0;
        for (std::uint32_t s : v) sum_v += y[s];
        const double h = task.grid[j] * (total - sum_v) / static_cast<double>(data.n() - v.size());
        double sse = 0.0;
        for (std::uint32_t s : v) sse += (y[s] - h) * (y[s] - h);
        sum += sse / static_cast<double>(v.size());
    }
    return sum / static_cast<double>(folds);
}

inline double validation_loss(const TractableTask& task, const IndexAssignment& assignment, const Dataset& data, std::size_t j) {
    if (data.n() != assignment.n()) throw ConfigError("validation_loss: dataset size differs from the assignment's n");
    if (j >= task.configurations() || j >= assignment.configurations()) throw ConfigError("validation_loss: configuration index out of range");
    return fold_average_loss(task, data, j, assignment.folds(), [&](std::size_t m) { return assignment.set(j, m); });
}

inline double validation_loss(const TractableTask& task, std::span<const IndexSet> row, const Dataset& data, std::size_t j) {
    return fold_average_loss(task, data, j, row.size(), [&](std::size_t m) { return std::span<const std::uint32_t>(row[m]); });
}

// ---------------------------------------------------------------------------
// Covariance check

struct SchemeCovariance {
    SchemeSpec scheme;
    Eigen::MatrixXd cov;  ///< covariance of sqrt(n) * validation losses
    Eigen::MatrixXd corr;

    double mean_variance() const { return cov.diagonal().mean(); }
    double mean_offdiag_corr() const {
        const Eigen::Index J = corr.rows();
        if (J < 2) return 1.0;
        double s = 0.0;
        for (Eigen::Index i = 0; i < J; ++i)
            for (Eigen::Index j = i + 1; j < J; ++j) s += corr(i, j);
        return s / static_cast<double>(J * (J - 1) / 2);
    }
};

struct CovCheckResult {
    std::vector<SchemeCovariance> schemes; ///< fixed, reshuffled, CV reference
    double corr_ratio = 0.0;               ///< reshuffled / fixed mean off-diagonal correlation
    double var_ratio_reshuffled = 0.0;     ///< reshuffled / fixed mean variance
    double var_ratio_reference = 0.0;      ///< fixed / CV-reference mean variance
    double predicted_corr_ratio = 0.0;
    double predicted_var_ratio_reshuffled = 0.0;
    double predicted_var_ratio_reference = 0.0;
    std::size_t replications = 0;
};

struct CovCheckConfig {
    Variant pair = Variant::holdout; ///< fixed variant; its reshuffled counterpart is added
    double alpha = 0.2;
    std::size_t folds = 5;           ///< M for the M-fold variants
    std::size_t reference_folds = 5; ///< M of the fixed CV reference
    std::size_t replications = 20000;
    std::uint64_t seed = 0;
};

/// Symmetric and no eigenvalue below -tol * max|eigenvalue|, both relative.
inline bool is_psd(const Eigen::MatrixXd& a, double tol = 1e-9) {
    const double size = std::max(a.cwiseAbs().maxCoeff(), 1e-300);
    if ((a - a.transpose()).cwiseAbs().maxCoeff() > tol * size) return false;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a, Eigen::EigenvaluesOnly);
    const auto& ev = eig.eigenvalues();
    const double scale = std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
    return ev.minCoeff() >= -tol * scale;
}

namespace detail {

inline SchemeCovariance summarize(const SchemeSpec& scheme, const std::vector<double>& losses, std::size_t reps, std::size_t J) {
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(
        losses.data(), static_cast<Eigen::Index>(reps), static_cast<Eigen::Index>(J));
    const Eigen::RowVectorXd mean = x.colwise().mean();
    const Eigen::MatrixXd centered = x.rowwise() - mean;
    Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(reps - 1);
    cov *= static_cast<double>(scheme.n);
    cov = (0.5 * (cov + cov.transpose())).eval();
    Eigen::MatrixXd corr(cov.rows(), cov.cols());
    for (Eigen::Index i = 0; i < cov.rows(); ++i)
        for (Eigen::Index j = 0; j < cov.cols(); ++j) corr(i, j) = cov(i, j) / std::sqrt(cov(i, i) * cov(j, j));
    return {scheme, std::move(cov), std::move(corr)};
}

} // namespace detail

/// Draws a fresh dataset per replication and evaluates every configuration
/// under the fixed scheme, its reshuffled counterpart and a fixed CV
/// reference, each with independent split draws. Only ratios are compared
/// with the closed-form predictions, so the unknown kernel cancels.
inline CovCheckResult covariance_check(const TractableTask& task, const CovCheckConfig& config, const Parallel& parallel = serial()) {
    const TaskModel model(task);
    if (config.replications < 1000) throw ConfigError("covariance_check: replications must be >= 1000");
    const Variant fixed = fixed_counterpart(config.pair);
    const std::vector<SchemeSpec> schemes{
        SchemeSpec::make(fixed, task.n, config.alpha, config.folds),
        SchemeSpec::make(reshuffled_counterpart(fixed), task.n, config.alpha, config.folds),
        SchemeSpec::make(Variant::mfold_cv, task.n, 0.0, config.reference_folds),
    };
    const std::size_t J = task.configurations();
    const std::size_t R = config.replications;
    std::vector<std::vector<double>> losses(schemes.size(), std::vector<double>(R * J));

    parallel.for_each(R, [&](std::size_t r) {
        Stream data_rng = substream(config.seed, {tag(StreamTag::dataset), r});
        const Dataset data = model.draw(data_rng);
        for (std::size_t k = 0; k < schemes.size(); ++k) {
            Stream split_rng = substream(config.seed, {tag(StreamTag::splits), r, k});
            const IndexAssignment a = generate(schemes[k], J, split_rng);
            for (std::size_t j = 0; j < J; ++j) losses[k][r * J + j] = validation_loss(task, a, data, j);
        }
    });

    CovCheckResult out;
    out.replications = R;
    for (std::size_t k = 0; k < schemes.size(); ++k) out.schemes.push_back(detail::summarize(schemes[k], losses[k], R, J));
    const auto& f = out.schemes[0];
    const auto& s = out.schemes[1];
    const auto& ref = out.schemes[2];
    out.corr_ratio = s.mean_offdiag_corr() / f.mean_offdiag_corr();
    out.var_ratio_reshuffled = s.mean_variance() / f.mean_variance();
    out.var_ratio_reference = f.mean_variance() / ref.mean_variance();

    const auto pf = closed_form(schemes[0]);
    const auto ps = closed_form(schemes[1]);
    const auto pr = closed_form(schemes[2]);
    out.predicted_corr_ratio = ps.tau2 / pf.tau2;
    out.predicted_var_ratio_reshuffled = ps.sigma2 / pf.sigma2;
    out.predicted_var_ratio_reference = pf.sigma2 / pr.sigma2;
    return out;
}

inline void write_covariance_csv(std::ostream& out, const CovCheckResult& r) {
    out << "scheme,i,j,cov,corr\n";
    for (const auto& s : r.schemes)
        for (Eigen::Index i = 0; i < s.cov.rows(); ++i)
            for (Eigen::Index j = 0; j < s.cov.cols(); ++j)
                out << to_string(s.scheme.variant) << ',' << (i + 1) << ',' << (j + 1) << ',' << format_double(s.cov(i, j)) << ','
                    << format_double(s.corr(i, j)) << '\n';
}

// ---------------------------------------------------------------------------
// Random search

struct HpoTrajectory {
    std::size_t replication = 0;
    Variant scheme = Variant::holdout;
    std::uint64_t seed = 0;
    std::vector<std::size_t> incumbent;
    std::vector<double> incumbent_validation_loss;
    std::vector<double> incumbent_true_risk;
};

struct HpoConfig {
    std::size_t iterations = 200;
    std::size_t replications = 500;
    std::uint64_t seed = 0;
};

struct HpoResult {
    SchemeSpec scheme;
    std::vector<HpoTrajectory> trajectories;
    std::vector<stats::MeanSe> mean_true_risk; ///< per iteration, across replications

    const stats::MeanSe& final_true_risk() const { return mean_true_risk.back(); }
};

/// Visit order: without replacement when the grid covers all iterations,
/// otherwise with replacement.
inline std::vector<std::size_t> visit_order(std::size_t grid, std::size_t iterations, Stream& rng) {
    std::vector<std::size_t> order;
    order.reserve(iterations);
    if (grid >= iterations) {
        std::vector<std::size_t> perm(grid);
        for (std::size_t i = 0; i < grid; ++i) perm[i] = i;
        for (std::size_t i = 0; i < iterations; ++i) {
            const auto r = i + static_cast<std::size_t>(uniform_index(rng, grid - i));
            std::swap(perm[i], perm[r]);
            order.push_back(perm[i]);
        }
    } else {
        for (std::size_t i = 0; i < iterations; ++i) order.push_back(static_cast<std::size_t>(uniform_index(rng, grid)));
    }
    return order;
}

/// Random search over the task grid. Per replication the dataset, the visit
/// order and the split stream depend only on (seed, replication), so a fixed
/// scheme and its reshuffled counterpart run on paired streams: the fixed
/// variant uses the first split draw for every configuration, the reshuffled
/// variant draws anew per evaluation. Ties keep the earlier incumbent.
inline HpoResult run_random_search(const TractableTask& task, const SchemeSpec& scheme, const HpoConfig& config,
                                   const Parallel& parallel = serial()) {
    const TaskModel model(task);
    scheme.validate();
    if (scheme.n != task.n) throw ConfigError("random search: scheme n differs from the task's n");
    if (config.iterations < 1) throw ConfigError("random search: iterations must be >= 1");
    if (config.replications < 1) throw ConfigError("random search: replications must be >= 1");

    HpoResult out;
    out.scheme = scheme;
    out.trajectories.resize(config.replications);
    parallel.for_each(config.replications, [&](std::size_t r) {
        Stream data_rng = substream(config.seed, {tag(StreamTag::dataset), r});
        Stream order_rng = substream(config.seed, {tag(StreamTag::visit_order), r});
        Stream split_rng = substream(config.seed, {tag(StreamTag::splits), r});
        const Dataset data = model.draw(data_rng);
        const auto order = visit_order(task.configurations(), config.iterations, order_rng);

        HpoTrajectory t;
        t.replication = r;
        t.scheme = scheme.variant;
        t.seed = config.seed;
        t.incumbent.reserve(config.iterations);
        t.incumbent_validation_loss.reserve(config.iterations);
        t.incumbent_true_risk.reserve(config.iterations);

        std::vector<IndexSet> row = draw_configuration(scheme, split_rng);
        std::size_t best = 0;
        double best_loss = 0.0;
        for (std::size_t it = 0; it < config.iterations; ++it) {
            if (it > 0 && is_reshuffled(scheme.variant)) row = draw_configuration(scheme, split_rng);
            const std::size_t j = order[it];
            const double loss = validation_loss(task, row, data, j);
            if (it == 0 || loss < best_loss) {
                best = j;
                best_loss = loss;
            }
            t.incumbent.push_back(best);
            t.incumbent_validation_loss.push_back(best_loss);
            t.incumbent_true_risk.push_back(task.true_risk(best));
        }
        out.trajectories[r] = std::move(t);
    });

    out.mean_true_risk.resize(config.iterations);
    std::vector<double> column(config.replications);
    for (std::size_t it = 0; it < config.iterations; ++it) {
        for (std::size_t r = 0; r < config.replications; ++r) column[r] = out.trajectories[r].incumbent_true_risk[it];
        out.mean_true_risk[it] = stats::mean_se(column);
    }
    return out;
}

inline void write_trajectory_csv(std::ostream& out, const TractableTask& task, const HpoResult& result) {
    out << "replication,iteration,scheme,incumbent_lambda,incumbent_validation_loss,incumbent_true_risk\n";
    const std::string scheme{to_string(result.scheme.variant)};
    for (const auto& t : result.trajectories)
        for (std::size_t it = 0; it < t.incumbent.size(); ++it)
            out << (t.replication + 1) << ',' << (it + 1) << ',' << scheme << ',' << format_double(task.grid[t.incumbent[it]]) << ','
                << format_double(t.incumbent_validation_loss[it]) << ',' << format_double(t.incumbent_true_risk[it]) << '\n';
}

inline void write_hpo_summary_csv(std::ostream& out, const HpoResult& result) {
    out << "iteration,scheme,mean_incumbent_true_risk,stderr\n";
    const std::string scheme{to_string(result.scheme.variant)};
    for (std::size_t it = 0; it < result.mean_true_risk.size(); ++it)
        out << (it + 1) << ',' << scheme << ',' << format_double(result.mean_true_risk[it].mean) << ','
            << format_double(result.mean_true_risk[it].standard_error) << '\n';
}

} // namespace reshuffle::empirics
