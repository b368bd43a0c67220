// config.hpp: JSON run configuration for the command-line tool.
//
// All rates and frequencies are nu = rate / 2pi in Hz. Missing keys take
// defaults; unknown keys are rejected. The resolved document (defaults filled
// in) is echoed into every output header.
//
// Requires nlohmann/json (vendor/json.hpp).

#pragma once

#include "spincav/bifurcation.hpp"
#include "spincav/common.hpp"
#include "spincav/dynamics.hpp"
#include "spincav/spectral.hpp"
#include "spincav/steady.hpp"

#include <json.hpp>  // nlohmann, vendored

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace spincav {

using json = nlohmann::json;

struct ConfigError : ParameterError {
    using ParameterError::ParameterError;
};

namespace detail {

inline void check_keys(const json& obj, const std::string& block, const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw ConfigError("config block '" + block + "' must be an object");
    for (const auto& [k, v] : obj.items())
        if (!allowed.count(k)) throw ConfigError("unknown key '" + k + "' in config block '" + block + "'");
}

template <class T>
T take(json& obj, const std::string& key, const T& fallback) {
    if (!obj.contains(key)) obj[key] = fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("config key '" + key + "': " + e.what());
    }
}

inline const std::map<std::string, std::set<std::string>>& task_keys() {
    static const std::map<std::string, std::set<std::string>> keys{
        {"steady", {"eta_units", "a0_min", "a0_max", "points", "eta"}},
        {"sweep-omega", {"omega_start_hz", "omega_stop_hz", "omega_points", "families", "threshold",
                         "threshold_range_hz", "rel_tol"}},
        {"threshold", {"threshold_range_hz", "rel_tol", "families"}},
        {"dynamics", {"eta", "eta_units", "t_end_gamma_par", "samples", "spacing", "t_first_s", "rtol", "atol",
                      "method", "real_mode", "resume", "save_state", "dump_clusters"}},
        {"decay", {"omegas_hz", "eta_units", "eta_start", "eta_stop", "eta_points", "single_eta", "single_branch",
                   "oracle"}},
        {"quench", {"source", "eta_units", "eta_initial", "eta_quench", "scan_rel_min", "scan_rel_max", "scan_points",
                    "t_max_gamma_par", "sample_dt_gamma_par", "fit", "fit_min_t_gamma_par", "normal_form_selftest",
                    "rtol", "atol", "method"}},
    };
    return keys;
}

}  // namespace detail

struct RunConfig {
    std::string subcommand;
    SpectralShape shape;
    std::size_t clusters = 201;
    double window_mult = 4.0;
    double omega_coll = 0.0;  // rad/s
    SpinRates rates;
    CavityDrive cavity;
    json task = json::object();
    std::string out_dir = "out";
    std::string prefix;
    std::string format = "csv";
    json resolved;

    EnsembleRecipe recipe() const { return EnsembleRecipe{shape, clusters, window_mult, rates, cavity}; }
    Ensemble ensemble() const { return recipe().ensemble(omega_coll); }
};

/// Validates and resolves a parsed document for the given subcommand.
inline RunConfig parse_config(json doc, const std::string& subcommand) {
    using detail::take;
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");
    const auto& tk = detail::task_keys();
    if (!tk.count(subcommand)) throw ConfigError("unknown subcommand '" + subcommand + "'");
    detail::check_keys(doc, "top level", {"spectral", "ensemble", "cavity", "task", "output"});
    for (const char* b : {"spectral", "ensemble", "cavity", "task", "output"})
        if (!doc.contains(b)) doc[b] = json::object();

    RunConfig c;
    c.subcommand = subcommand;

    auto& sp = doc["spectral"];
    detail::check_keys(sp, "spectral", {"family", "q", "fwhm_hz", "omega_s_hz", "M", "window_mult"});
    c.shape.family = parse_family(take<std::string>(sp, "family", "qgaussian"));
    c.shape.q = take<double>(sp, "q", 1.39);
    c.shape.fwhm = hz_to_rad(take<double>(sp, "fwhm_hz", 9.4e6));
    const double omega_s_hz = take<double>(sp, "omega_s_hz", 2.87e9);
    c.shape.omega_s = hz_to_rad(omega_s_hz);
    const long m = take<long>(sp, "M", 201);
    if (m < 1) throw ConfigError("spectral.M must be >= 1");
    c.clusters = static_cast<std::size_t>(m);
    c.window_mult = take<double>(sp, "window_mult", 4.0);
    if (!(c.window_mult > 0.0)) throw ConfigError("spectral.window_mult must be positive");
    try {
        c.shape.validate();
    } catch (const ParameterError& e) {
        throw ConfigError(e.what());
    }

    auto& en = doc["ensemble"];
    detail::check_keys(en, "ensemble", {"omega_coll_hz", "gamma_perp_hz", "gamma_par_hz"});
    c.omega_coll = hz_to_rad(take<double>(en, "omega_coll_hz", 12e6));
    c.rates.gamma_perp = hz_to_rad(take<double>(en, "gamma_perp_hz", 250e3));
    c.rates.gamma_par = hz_to_rad(take<double>(en, "gamma_par_hz", 1e3));
    if (!(c.omega_coll >= 0.0)) throw ConfigError("ensemble.omega_coll_hz must be non-negative");
    if (!(c.rates.gamma_perp > 0.0 && c.rates.gamma_par > 0.0))
        throw ConfigError("ensemble rates gamma_perp_hz and gamma_par_hz must be positive");
    if (c.rates.gamma_perp < 0.5 * c.rates.gamma_par)
        throw ConfigError("gamma_perp must be at least gamma_par / 2");

    auto& cv = doc["cavity"];
    detail::check_keys(cv, "cavity", {"kappa_hz", "omega_c_hz", "omega_p_hz"});
    c.cavity.kappa = hz_to_rad(take<double>(cv, "kappa_hz", 0.8e6));
    const double oc = take<double>(cv, "omega_c_hz", omega_s_hz);
    const double op = take<double>(cv, "omega_p_hz", omega_s_hz);
    if (!(c.cavity.kappa > 0.0) || !std::isfinite(c.cavity.kappa)) throw ConfigError("cavity.kappa_hz must be positive");
    if (oc != omega_s_hz || op != omega_s_hz)
        throw ConfigError("only resonant operation is supported: omega_c_hz = omega_p_hz = omega_s_hz");
    c.cavity.omega_c = c.cavity.omega_p = c.shape.omega_s;

    detail::check_keys(doc["task"], "task", tk.at(subcommand));
    c.task = doc["task"];

    auto& out = doc["output"];
    detail::check_keys(out, "output", {"dir", "prefix", "format"});
    c.out_dir = take<std::string>(out, "dir", "out");
    c.prefix = take<std::string>(out, "prefix", subcommand);
    c.format = take<std::string>(out, "format", "csv");
    if (c.format != "csv") throw ConfigError("output.format must be 'csv'");

    c.resolved = doc;
    return c;
}

inline json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    try {
        return json::parse(in, nullptr, true, true);
    } catch (const json::exception& e) {
        throw ConfigError("malformed config " + path.string() + ": " + e.what());
    }
}

inline RunConfig load_config(const std::filesystem::path& path, const std::string& subcommand) {
    return parse_config(read_json_file(path), subcommand);
}

/// Reads a task value, recording the default in the resolved config.
template <class T>
T task_value(RunConfig& c, const std::string& key, const T& fallback) {
    T v = detail::take<T>(c.task, key, fallback);
    c.resolved["task"][key] = c.task[key];
    return v;
}

// ---------------------------------------------------------------------------
// State files for resuming long dynamics runs.

inline json state_to_json(const SystemState& s) {
    json j;
    j["t"] = s.t;
    j["a"] = {s.a.real(), s.a.imag()};
    json sm = json::array();
    for (const auto& v : s.sigma_minus) sm.push_back({v.real(), v.imag()});
    j["sigma_minus"] = sm;
    j["sigma_z"] = s.sigma_z;
    return j;
}

inline SystemState state_from_json(const json& j) {
    try {
        SystemState s;
        s.t = j.at("t").get<double>();
        s.a = {j.at("a").at(0).get<double>(), j.at("a").at(1).get<double>()};
        for (const auto& v : j.at("sigma_minus")) s.sigma_minus.emplace_back(v.at(0).get<double>(), v.at(1).get<double>());
        s.sigma_z = j.at("sigma_z").get<std::vector<double>>();
        if (s.sigma_minus.size() != s.sigma_z.size()) throw ConfigError("state file: cluster arrays differ in length");
        return s;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed state file: ") + e.what());
    }
}

}  // namespace spincav
