#pragma once

// JSON encodings of configs and results. Kept apart from the numerical
// headers so those compile without the JSON dependency.

#include <json.hpp>

#include <cstdint>
#include <string>
#include <type_traits>
#include <vector>

#include "reshuffle/empirics.hpp"
#include "reshuffle/errors.hpp"
#include "reshuffle/gp_surface.hpp"
#include "reshuffle/regret.hpp"
#include "reshuffle/splits.hpp"
#include "reshuffle/tau.hpp"

namespace reshuffle {

using Json = nlohmann::ordered_json;

namespace io_detail {

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    if constexpr (std::is_integral_v<T>) {
        const Json& v = j.at(key);
        if (v.is_number_float()) throw ConfigError(std::string("field '") + key + "' must be an integer");
        if constexpr (std::is_unsigned_v<T>) {
            if (v.is_number_integer() && !v.is_number_unsigned())
                throw ConfigError(std::string("field '") + key + "' must be nonnegative");
        }
    }
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("field '") + key + "': " + e.what());
    }
}

template <class T>
T require(const Json& j, const char* key) {
    if (!j.contains(key)) throw ConfigError(std::string("missing field '") + key + "'");
    return get_or<T>(j, key, T{});
}

} // namespace io_detail

inline Variant variant_from_string(const std::string& s) {
    if (auto v = parse_variant(s)) return *v;
    throw ConfigError("unknown scheme '" + s + "'; valid variants: " + variant_names());
}

inline Json scheme_to_json(const SchemeSpec& s) {
    return Json{{"variant", std::string(to_string(s.variant))}, {"n", s.n}, {"alpha", s.alpha}, {"M", s.folds}};
}

/// Parses {"variant", "n", "alpha", "M"}; M defaults to 1 and alpha may be
/// omitted for CV variants.
inline SchemeSpec scheme_from_json(const Json& j) {
    if (!j.is_object()) throw ConfigError("scheme must be a JSON object");
    const Variant v = variant_from_string(io_detail::require<std::string>(j, "variant"));
    const auto n = io_detail::require<std::size_t>(j, "n");
    const auto m = io_detail::get_or<std::size_t>(j, "M", 1);
    const double alpha = is_cv(v) ? io_detail::get_or<double>(j, "alpha", 0.0) : io_detail::require<double>(j, "alpha");
    return SchemeSpec::make(v, n, alpha, m);
}

/// The tau subcommand result.
inline Json tau_result_json(const SchemeSpec& s, const CovarianceParams& closed, const TauEstimate& mc, const TauConversion& conv) {
    Json flags = Json::array();
    if (conv.clamped) flags.push_back("tau2_clamped");
    if (conv.warning) flags.push_back("tau2_out_of_range");
    return Json{{"scheme", std::string(to_string(s.variant))},
                {"n", s.n},
                {"alpha", s.alpha},
                {"M", s.folds},
                {"sigma2", closed.sigma2},
                {"tau2", closed.tau2},
                {"sigma2_mc", conv.params.sigma2},
                {"tau2_mc", conv.params.tau2},
                {"stderr", mc.tau2_se},
                {"stderr_sigma2", mc.diag_se},
                {"draws", mc.draws},
                {"flags", flags}};
}

inline Json breakdown_to_json(const regret::RegretBreakdown& b) {
    return Json{{"A", b.A}, {"B", b.B}, {"bound", b.bound}, {"flags", b.flags}};
}

// ---------------------------------------------------------------------------
// Simulation configs

struct SimulationRequest {
    gp::SimulationConfig base;
    gp::SweepGrid grid;
};

inline gp::SimulationConfig default_simulation_config() {
    gp::SimulationConfig c;
    c.surface.grid = gp::uniform_grid(51);
    c.noise.sigma_k2 = 1.0;
    c.replications = 10000;
    return c;
}

/// {"surface": {"m", "minimizer", "J" | "grid"}, "noise": {"sigma_k2", "kappa", "tau"},
///  "replications", "seed", "sweep": {"m": [...], "kappa": [...], "tau": [...]}}
/// Without "sweep" the single cell given by surface.m, noise.kappa, noise.tau runs.
inline SimulationRequest simulation_from_json(const Json& j) {
    using io_detail::get_or;
    if (!j.is_object()) throw ConfigError("simulation config must be a JSON object");
    SimulationRequest req;
    req.base = default_simulation_config();
    const Json surface = j.value("surface", Json::object());
    const Json noise = j.value("noise", Json::object());
    req.base.surface.m = get_or<double>(surface, "m", 1.0);
    req.base.surface.minimizer = get_or<double>(surface, "minimizer", 0.5);
    if (surface.contains("grid")) {
        req.base.surface.grid = get_or<std::vector<double>>(surface, "grid", {});
    } else {
        req.base.surface.grid = gp::uniform_grid(get_or<std::size_t>(surface, "J", 51));
    }
    req.base.noise.sigma_k2 = get_or<double>(noise, "sigma_k2", 1.0);
    req.base.noise.kappa = get_or<double>(noise, "kappa", 1.0);
    req.base.noise.tau = get_or<double>(noise, "tau", 1.0);
    req.base.replications = get_or<std::size_t>(j, "replications", 10000);
    req.base.seed = get_or<std::uint64_t>(j, "seed", 0);
    if (j.contains("sweep")) {
        const Json& s = j.at("sweep");
        req.grid.m = get_or<std::vector<double>>(s, "m", req.grid.m);
        req.grid.kappa = get_or<std::vector<double>>(s, "kappa", req.grid.kappa);
        req.grid.tau = get_or<std::vector<double>>(s, "tau", req.grid.tau);
    } else {
        req.grid.m = {req.base.surface.m};
        req.grid.kappa = {req.base.noise.kappa};
        req.grid.tau = {req.base.noise.tau};
    }
    req.base.validate();
    return req;
}

inline Json simulation_to_json(const SimulationRequest& r) {
    return Json{{"surface", {{"minimizer", r.base.surface.minimizer}, {"grid", r.base.surface.grid}}},
                {"noise", {{"sigma_k2", r.base.noise.sigma_k2}}},
                {"replications", r.base.replications},
                {"seed", r.base.seed},
                {"sweep", {{"m", r.grid.m}, {"kappa", r.grid.kappa}, {"tau", r.grid.tau}}}};
}

// ---------------------------------------------------------------------------
// Tractable task

/// {"n", "theta", "noise_sd", "column_kappa", "grid": [...]} or, instead of
/// "grid", {"grid_points", "grid_max"} for equally spaced levels on [0, grid_max].
inline empirics::TractableTask task_from_json(const Json& j, empirics::TractableTask fallback) {
    using io_detail::get_or;
    if (!j.is_object()) throw ConfigError("task must be a JSON object");
    empirics::TractableTask t = std::move(fallback);
    t.n = get_or<std::size_t>(j, "n", t.n);
    t.theta = get_or<double>(j, "theta", t.theta);
    t.noise_sd = get_or<double>(j, "noise_sd", t.noise_sd);
    t.column_kappa = get_or<double>(j, "column_kappa", t.column_kappa);
    if (j.contains("grid")) {
        t.grid = get_or<std::vector<double>>(j, "grid", {});
    } else if (j.contains("grid_points")) {
        const auto points = get_or<std::size_t>(j, "grid_points", 2);
        const double hi = get_or<double>(j, "grid_max", 2.0);
        if (points < 2) throw ConfigError("task: grid_points must be >= 2");
        t.grid.resize(points);
        for (std::size_t i = 0; i < points; ++i) t.grid[i] = hi * static_cast<double>(i) / static_cast<double>(points - 1);
    }
    t.validate();
    return t;
}

inline Json task_to_json(const empirics::TractableTask& t) {
    return Json{{"n", t.n}, {"theta", t.theta}, {"noise_sd", t.noise_sd}, {"column_kappa", t.column_kappa}, {"grid", t.grid}};
}

inline Json covcheck_to_json(const empirics::CovCheckResult& r) {
    Json schemes = Json::array();
    for (const auto& s : r.schemes)
        schemes.push_back({{"scheme", scheme_to_json(s.scheme)},
                           {"mean_variance", s.mean_variance()},
                           {"mean_offdiag_corr", s.mean_offdiag_corr()},
                           {"psd", empirics::is_psd(s.cov)}});
    return Json{{"replications", r.replications},
                {"corr_ratio", r.corr_ratio},
                {"predicted_corr_ratio", r.predicted_corr_ratio},
                {"var_ratio_reshuffled", r.var_ratio_reshuffled},
                {"predicted_var_ratio_reshuffled", r.predicted_var_ratio_reshuffled},
                {"var_ratio_reference", r.var_ratio_reference},
                {"predicted_var_ratio_reference", r.predicted_var_ratio_reference},
                {"schemes", schemes}};
}

} // namespace reshuffle
