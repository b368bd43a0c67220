// spincav: command-line front end. Reads a JSON run config, writes CSV files.
//
// Frequencies and rates at this boundary are rate/2pi in Hz. Drive values are
// given either in units of kappa (eta/kappa, the amplitude scale of a) or
// normalized by the ensemble's reference drive (midpoint of the SN pair).

#include "spincav/adiabatic.hpp"
#include "spincav/bifurcation.hpp"
#include "spincav/config.hpp"
#include "spincav/dynamics.hpp"
#include "spincav/io.hpp"
#include "spincav/quench.hpp"
#include "spincav/stability.hpp"
#include "spincav/steady.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

using namespace spincav;
namespace fs = std::filesystem;

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kNumerical = 3, kPartial = 4 };

struct Globals {
    std::string config;
    std::string out;
    std::size_t workers = 0;
    std::string model;  // empty: subcommand default
    std::string format = "csv";
    bool eta_normalized = false;
};

// subcommand flags; unset options leave the config value alone
struct Flags {
    std::string spacing, resume, save_state;
    bool threshold = false, oracle = false, selftest = false;
    std::optional<double> single_eta;
    std::string single_branch;
};

double hz(double rad) { return rad / (2.0 * std::numbers::pi); }

struct Context {
    RunConfig cfg;
    Globals g;
    std::size_t workers = 1;
    fs::path dir;

    fs::path path(const std::string& suffix) const { return dir / (cfg.prefix + "_" + suffix); }

    // called right before writing so every task default read so far is in the dump
    void stamp(io::CsvTable& t, const std::vector<std::string>& notes) const {
        t.comment("spincav " + cfg.subcommand);
        t.comment("config " + cfg.resolved.dump());
        t.comment("frequencies and rates are rate/2pi in Hz; eta columns are eta/kappa unless named *_normalized");
        t.comment("deterministic: no random seeds; identical config gives identical files");
        for (const auto& n : notes) t.comment(n);
    }

    void write(const std::string& suffix, io::CsvTable& t, const std::vector<std::string>& notes = {}) const {
        stamp(t, notes);
        const auto p = path(suffix);
        io::write_csv(p, t);
        std::cout << "wrote " << p.string() << '\n';
    }
};

/// Drive conversion for one ensemble.
struct EtaScale {
    double kappa = 1.0;
    double reference = 1.0;  // SN midpoint, steepest point, or kappa
    std::optional<SnPair> pair;

    EtaScale(const CooperativityTable& tab, double k)
        : kappa(k), reference(eta_reference(tab, k)), pair(find_sn_pair(tab, k)) {}

    double absolute(double v, const std::string& units) const {
        if (units == "kappa") return v * kappa;
        if (units == "normalized") return v * reference;
        throw ConfigError("eta_units must be 'kappa' or 'normalized', got '" + units + "'");
    }
    double over_kappa(double eta) const { return eta / kappa; }
    double normalized(double eta) const { return eta / reference; }

    std::vector<std::string> notes() const {
        std::vector<std::string> n;
        n.push_back("eta_reference/kappa " + io::fmt(reference / kappa));
        if (pair)
            n.push_back("sn_pair eta_up/kappa " + io::fmt(pair->eta_up / kappa) + " eta_down/kappa " +
                        io::fmt(pair->eta_down / kappa) + " a0sq_up " + io::fmt(pair->a0_up * pair->a0_up) +
                        " a0sq_down " + io::fmt(pair->a0_down * pair->a0_down));
        else
            n.push_back("sn_pair none (monostable)");
        return n;
    }
};

std::string eta_units(Context& c) {
    return task_value<std::string>(c.cfg, "eta_units", c.g.eta_normalized ? "normalized" : "kappa");
}

// a task value that may be a number or a list of numbers
std::vector<double> number_list(Context& c, const std::string& key, const json& fallback) {
    if (!c.cfg.task.contains(key)) c.cfg.task[key] = fallback;
    c.cfg.resolved["task"][key] = c.cfg.task[key];
    const auto& v = c.cfg.task[key];
    try {
        if (v.is_number()) return {v.get<double>()};
        if (v.is_array()) return v.get<std::vector<double>>();
    } catch (const json::exception&) {
    }
    throw ConfigError("task." + key + " must be a number or a list of numbers");
}

std::optional<double> optional_number(Context& c, const std::string& key) {
    if (!c.cfg.task.contains(key)) c.cfg.task[key] = nullptr;
    c.cfg.resolved["task"][key] = c.cfg.task[key];
    const auto& v = c.cfg.task[key];
    if (v.is_null()) return std::nullopt;
    if (!v.is_number()) throw ConfigError("task." + key + " must be a number or null");
    return v.get<double>();
}

std::size_t count_value(Context& c, const std::string& key, long fallback, long min) {
    const long v = task_value<long>(c.cfg, key, fallback);
    if (v < min) throw ConfigError("task." + key + " must be >= " + std::to_string(min));
    return static_cast<std::size_t>(v);
}

double positive_value(Context& c, const std::string& key, double fallback) {
    const double v = task_value<double>(c.cfg, key, fallback);
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("task." + key + " must be positive");
    return v;
}

ode::SolverOptions solver_options(Context& c) {
    ode::SolverOptions so;
    so.rtol = positive_value(c, "rtol", 1e-8);
    so.atol = positive_value(c, "atol", 1e-10);
    const auto m = task_value<std::string>(c.cfg, "method", "dopri5");
    if (m == "dopri5") so.method = ode::OdeMethod::DormandPrince45;
    else if (m == "rosenbrock") so.method = ode::OdeMethod::Rosenbrock23;
    else throw ConfigError("task.method must be 'dopri5' or 'rosenbrock'");
    return so;
}

std::vector<SpectralFamily> families(Context& c) {
    const auto names = task_value<std::vector<std::string>>(c.cfg, "families", {"gaussian", "qgaussian", "lorentzian"});
    if (names.empty()) throw ConfigError("task.families must not be empty");
    std::vector<SpectralFamily> out;
    for (const auto& n : names) {
        try {
            out.push_back(parse_family(n));
        } catch (const ParameterError& e) {
            throw ConfigError(e.what());
        }
    }
    return out;
}

std::string model_choice(const Context& c, const std::string& fallback) {
    const std::string m = c.g.model.empty() ? fallback : c.g.model;
    if (m != "full" && m != "adiabatic" && m != "both") throw ConfigError("--model must be full, adiabatic or both");
    return m;
}

std::vector<std::string> models_of(const std::string& m) {
    if (m == "both") return {"full", "adiabatic"};
    return {m};
}

// ---------------------------------------------------------------------------

int run_steady(Context& c) {
    const auto ens = c.cfg.ensemble();
    const auto tab = cooperativities(ens, c.cfg.cavity);
    const double k = c.cfg.cavity.kappa;
    const EtaScale sc(tab, k);
    const auto units = eta_units(c);
    const auto [lo, hi] = default_a0_range(tab, k);
    const double a0_min = positive_value(c, "a0_min", lo);
    const double a0_max = positive_value(c, "a0_max", hi);
    if (a0_max <= a0_min) throw ConfigError("task.a0_max must exceed task.a0_min");
    const auto n = count_value(c, "points", 2000, 2);
    const auto drives = number_list(c, "eta", json::array());
    std::vector<double> abs_drives;
    for (double v : drives) {
        const double e = sc.absolute(v, units);
        if (!(e > 0.0)) throw ConfigError("task.eta values must be positive");
        abs_drives.push_back(e);
    }

    const auto curve = s_curve(tab, k, a0_min, a0_max, n);
    io::CsvTable t({"eta", "eta_normalized", "a0", "a0_sq", "branch", "stable"});
    for (const auto& p : curve.points)
        t.row(sc.over_kappa(p.eta), sc.normalized(p.eta), p.a0, p.a0_sq, to_string(p.branch), p.stable);

    io::CsvTable roots({"eta", "eta_normalized", "a0", "a0_sq", "branch", "stable", "residual"});
    for (double e : abs_drives) {
        const auto rs = solve_a0(e, tab, k);
        for (std::size_t i = 0; i < rs.size(); ++i) {
            Branch b = Branch::Unique;
            if (rs.size() >= 3) b = i == 0 ? Branch::Lower : (i + 1 == rs.size() ? Branch::Upper : Branch::Unstable);
            else if (sc.pair && !sc.pair->degenerate()) b = rs[i].a0 <= sc.pair->a0_down ? Branch::Lower : Branch::Upper;
            const double res = (eta_of_a0(rs[i].a0, tab, k) - e) / e;
            roots.row(sc.over_kappa(e), sc.normalized(e), rs[i].a0, rs[i].a0 * rs[i].a0, to_string(b), rs[i].stable, res);
        }
    }

    auto notes = sc.notes();
    notes.push_back("C_total " + io::fmt(tab.total) + " M " + std::to_string(ens.size()));
    c.write("scurve.csv", t, notes);
    if (!abs_drives.empty()) c.write("roots.csv", roots, notes);

    std::cout << "C_total " << io::fmt(tab.total) << '\n';
    if (sc.pair && !sc.pair->degenerate())
        std::cout << "bistable: eta_up/kappa " << io::fmt(sc.pair->eta_up / k) << " eta_down/kappa "
                  << io::fmt(sc.pair->eta_down / k) << " ratio " << io::fmt(sc.pair->eta_down / sc.pair->eta_up) << '\n';
    else
        std::cout << "monostable\n";
    return kOk;
}

// ---------------------------------------------------------------------------

struct ThresholdRow {
    SpectralFamily family;
    Threshold th;
};

std::vector<ThresholdRow> thresholds(Context& c, const std::vector<SpectralFamily>& fams) {
    const auto range = task_value<std::vector<double>>(c.cfg, "threshold_range_hz", {1e6, 40e6});
    if (range.size() != 2 || !(range[0] > 0.0) || !(range[1] > range[0]))
        throw ConfigError("task.threshold_range_hz must be [lo, hi] with 0 < lo < hi");
    const double tol = positive_value(c, "rel_tol", 1e-4);
    std::vector<ThresholdRow> out;
    for (auto f : fams) {
        auto r = c.cfg.recipe();
        r.shape.family = f;
        out.push_back({f, threshold_coupling(r, hz_to_rad(range[0]), hz_to_rad(range[1]), tol)});
    }
    return out;
}

void print_thresholds(const std::vector<ThresholdRow>& rows) {
    for (const auto& r : rows)
        std::cout << "threshold " << to_string(r.family) << ": Omega_th/2pi " << io::fmt(hz(r.th.omega_coll))
                  << " Hz C_th " << io::fmt(r.th.cooperativity) << '\n';
}

io::CsvTable threshold_table(const std::vector<ThresholdRow>& rows) {
    io::CsvTable t({"family", "omega_th_over_2pi_hz", "C_th"});
    for (const auto& r : rows) t.row(to_string(r.family), hz(r.th.omega_coll), r.th.cooperativity);
    return t;
}

int run_threshold(Context& c) {
    const auto fams = families(c);
    auto rows = thresholds(c, fams);
    auto t = threshold_table(rows);
    c.write("threshold.csv", t);
    print_thresholds(rows);
    return kOk;
}

int run_sweep(Context& c, const Flags& fl) {
    if (fl.threshold) c.cfg.task["threshold"] = true;
    const double start = positive_value(c, "omega_start_hz", 1e6);
    const double stop = positive_value(c, "omega_stop_hz", 20e6);
    if (stop <= start) throw ConfigError("task.omega_stop_hz must exceed task.omega_start_hz");
    const auto n = count_value(c, "omega_points", 96, 2);
    const auto fams = families(c);
    const bool want_th = task_value<bool>(c.cfg, "threshold", false);
    std::vector<ThresholdRow> th;
    if (want_th) th = thresholds(c, fams);

    std::vector<double> omegas;
    for (double v : roots::linear_grid(start, stop, n)) omegas.push_back(hz_to_rad(v));
    const auto sweeps = sweep_omega(c.cfg.recipe(), fams, omegas, c.workers);
    const double k = c.cfg.cavity.kappa;

    std::vector<std::pair<std::string, double>> onset;
    for (const auto& sw : sweeps) {
        io::CsvTable t({"omega_over_2pi_hz", "C_total", "eta_sn_up", "eta_sn_down", "a0sq_sn_up", "a0sq_sn_down",
                        "eta_sn_up_normalized", "eta_sn_down_normalized"});
        std::optional<double> first;
        for (const auto& r : sw.rows) {
            if (!r.pair || r.pair->degenerate()) continue;
            const auto& p = *r.pair;
            if (!first) first = r.omega_coll;
            const double mid = p.eta_mid();
            t.row(hz(r.omega_coll), r.cooperativity, p.eta_up / k, p.eta_down / k, p.a0_up * p.a0_up,
                  p.a0_down * p.a0_down, p.eta_up / mid, p.eta_down / mid);
        }
        c.write(to_string(sw.family) + ".csv", t,
                {"family " + to_string(sw.family) + "; rows only where the S-curve is bistable",
                 "eta_sn_*_normalized are divided by each row's own SN midpoint"});
        onset.push_back({to_string(sw.family), first ? hz(*first) : std::numeric_limits<double>::infinity()});
    }

    // the narrower-tailed line shape should cusp first
    std::ostringstream line;
    bool ordered = true;
    for (std::size_t i = 0; i < onset.size(); ++i) {
        line << (i ? " <= " : "") << onset[i].first << " ("
             << (std::isfinite(onset[i].second) ? io::fmt(onset[i].second) + " Hz" : std::string("none")) << ")";
        if (i && !(onset[i - 1].second <= onset[i].second)) ordered = false;
    }
    std::cout << "cusp onset: " << line.str() << (ordered ? " ordered" : " NOT ordered") << '\n';

    if (want_th) {
        auto t = threshold_table(th);
        c.write("threshold.csv", t);
        print_thresholds(th);
    }
    return kOk;
}

// ---------------------------------------------------------------------------

fs::path indexed(const fs::path& p, std::size_t i, std::size_t n) {
    if (n == 1) return p;
    fs::path q = p.parent_path() / (p.stem().string() + "_eta" + std::to_string(i) + p.extension().string());
    return q;
}

int run_dynamics(Context& c, const Flags& fl) {
    if (!fl.spacing.empty()) c.cfg.task["spacing"] = fl.spacing;
    if (!fl.resume.empty()) c.cfg.task["resume"] = fl.resume;
    if (!fl.save_state.empty()) c.cfg.task["save_state"] = fl.save_state;

    const auto ens = c.cfg.ensemble();
    const auto tab = cooperativities(ens, c.cfg.cavity);
    const double k = c.cfg.cavity.kappa, gpar = ens.gamma_par;
    const EtaScale sc(tab, k);
    const auto units = eta_units(c);
    if (!c.cfg.task.contains("eta")) throw ConfigError("dynamics needs task.eta (number or list)");
    const auto drives = number_list(c, "eta", json::array());
    if (drives.empty()) throw ConfigError("task.eta must not be empty");
    const double span = positive_value(c, "t_end_gamma_par", 20.0) / gpar;
    const auto n = count_value(c, "samples", 400, 1);
    const auto spacing_s = task_value<std::string>(c.cfg, "spacing", "log");
    if (spacing_s != "log" && spacing_s != "linear") throw ConfigError("task.spacing must be 'log' or 'linear'");
    const auto spacing = spacing_s == "log" ? SampleSpacing::Log : SampleSpacing::Linear;
    const double t_first = task_value<double>(c.cfg, "t_first_s", 0.0);
    if (t_first < 0.0) throw ConfigError("task.t_first_s must be >= 0");
    const auto solver = solver_options(c);
    const bool real_mode = task_value<bool>(c.cfg, "real_mode", true);
    const auto resume = task_value<std::string>(c.cfg, "resume", "");
    const auto save_state = task_value<std::string>(c.cfg, "save_state", "");
    const bool dump = task_value<bool>(c.cfg, "dump_clusters", false);
    const auto model = model_choice(c, "full");
    c.cfg.resolved["cli"]["model"] = model;

    std::vector<double> etas;
    for (double v : drives) {
        const double e = sc.absolute(v, units);
        if (!(e >= 0.0)) throw ConfigError("task.eta values must be >= 0");
        etas.push_back(e);
    }

    SystemState init = SystemState::ground(ens.size());
    if (!resume.empty()) {
        init = state_from_json(read_json_file(resume));
        if (init.sigma_z.size() != ens.size()) throw ConfigError("state file cluster count does not match M");
    }
    const double t0 = init.t, t_end = t0 + span;
    const auto samples = sample_times(t0, t_end, n, spacing, t_first);
    const auto central = ens.central_index();
    const bool can_fold = real_mode && ens.is_symmetric() && c.cfg.cavity.omega_c == c.cfg.shape.omega_s;

    struct Out {
        std::string suffix;
        io::CsvTable table;
        std::vector<std::string> notes;
    };
    std::vector<Out> outs;

    for (std::size_t i = 0; i < etas.size(); ++i) {
        const double eta = etas[i];
        std::vector<std::string> notes = sc.notes();
        notes.push_back("eta/kappa " + io::fmt(sc.over_kappa(eta)) + " eta_normalized " + io::fmt(sc.normalized(eta)));
        notes.push_back("drive switched on at t = " + io::fmt(t0) + " s from " +
                        (resume.empty() ? std::string("the ground state") : "state file " + resume));
        std::string stationary = "stationary a0:";
        for (const auto& r : solve_a0(eta, tab, k))
            stationary += " " + io::fmt(r.a0) + (r.stable ? "(stable)" : "(unstable)");
        notes.push_back(stationary);
        const std::string tag = etas.size() == 1 ? "" : "_eta" + std::to_string(i);

        for (const auto& m : models_of(model)) {
            io::CsvTable t({"t_seconds", "t_gamma_par", "re_a", "im_a", "a_sq", "sigma_z_central", "model"});
            std::vector<std::string> cols{"t_seconds"};
            for (std::size_t j = 0; j < ens.size(); ++j) cols.push_back("sigma_z_" + std::to_string(j));
            io::CsvTable clusters(cols);
            auto mnotes = notes;
            if (m == "full") {
                IntegrateOptions io;
                io.solver = solver;
                io.keep_snapshots = dump;
                bool fold = can_fold;
                if (fold) {
                    try {
                        (void)RealModeModel(ens, c.cfg.cavity).pack(init);
                    } catch (const ParameterError&) {
                        fold = false;  // resumed state breaks the mirror symmetry
                    }
                }
                const auto tr = fold ? real_mode_integrate(init, ens, c.cfg.cavity, {eta, t0}, t_end, samples, io)
                                     : integrate(init, ens, c.cfg.cavity, {eta, t0}, t_end, samples, io);
                mnotes.push_back(std::string("full model, ") + (fold ? "folded real system" : "complex system") +
                                 "; steps " + std::to_string(tr.stats.accepted) + " accepted " +
                                 std::to_string(tr.stats.rejected) + " rejected");
                for (std::size_t s = 0; s < tr.size(); ++s) {
                    t.row(tr.t[s], tr.t[s] * gpar, tr.a[s].real(), tr.a[s].imag(), std::norm(tr.a[s]),
                          tr.sigma_z_central[s], "full");
                    if (dump) {
                        std::vector<std::string> r{io::fmt(tr.t[s])};
                        for (double z : tr.snapshots[s].sigma_z) r.push_back(io::fmt(z));
                        clusters.row_strings(r);
                    }
                }
                if (!save_state.empty()) {
                    const auto p = indexed(save_state, i, etas.size());
                    io::write_atomic(p, state_to_json(tr.final_state).dump(1) + "\n");
                    std::cout << "wrote " << p.string() << '\n';
                }
                std::cout << "eta/kappa " << io::fmt(sc.over_kappa(eta)) << " full: a(t_end) "
                          << io::fmt(tr.a.back().real()) << (tr.a.back().imag() >= 0 ? "+" : "")
                          << io::fmt(tr.a.back().imag()) << "i\n";
            } else {
                SlowState s0 = slow_ground(ens.size(), t0 * gpar);
                s0.sigma_z = init.sigma_z;
                std::vector<double> taus;
                for (double ts : samples) taus.push_back(ts * gpar);
                SlowOptions so;
                so.solver = solver;
                so.solver.atol = std::min(solver.atol, 1e-10);
                so.keep_snapshots = dump;
                so.central = central;
                const auto tr = integrate_slow(s0, tab, eta, k, t_end * gpar, taus, so);
                mnotes.push_back("adiabatic model: a enslaved to the inversions; im_a is zero by construction");
                for (std::size_t s = 0; s < tr.size(); ++s) {
                    t.row(tr.tau[s] / gpar, tr.tau[s], tr.a[s], 0.0, tr.a[s] * tr.a[s], tr.sigma_z_central[s],
                          "adiabatic");
                    if (dump) {
                        std::vector<std::string> r{io::fmt(tr.tau[s] / gpar)};
                        for (double z : tr.snapshots[s]) r.push_back(io::fmt(z));
                        clusters.row_strings(r);
                    }
                }
                std::cout << "eta/kappa " << io::fmt(sc.over_kappa(eta)) << " adiabatic: a(t_end) "
                          << io::fmt(tr.a.back()) << '\n';
            }
            outs.push_back({m + tag + ".csv", std::move(t), mnotes});
            if (dump) outs.push_back({m + tag + "_clusters.csv", std::move(clusters), mnotes});
        }
    }
    for (auto& o : outs) c.write(o.suffix, o.table, o.notes);
    return kOk;
}

// ---------------------------------------------------------------------------

int run_decay(Context& c, const Flags& fl) {
    if (fl.oracle) c.cfg.task["oracle"] = true;
    if (fl.single_eta) c.cfg.task["single_eta"] = *fl.single_eta;
    if (!fl.single_branch.empty()) c.cfg.task["single_branch"] = fl.single_branch;

    const auto omegas_hz = task_value<std::vector<double>>(c.cfg, "omegas_hz", {7e6, 8e6, 8.84e6, 12e6});
    if (omegas_hz.empty()) throw ConfigError("task.omegas_hz must not be empty");
    for (double v : omegas_hz)
        if (!(v > 0.0)) throw ConfigError("task.omegas_hz values must be positive");
    // the interesting range sits at a different eta/kappa for every Omega, so default to normalized drives
    const auto units = task_value<std::string>(c.cfg, "eta_units", "normalized");
    const double e0 = positive_value(c, "eta_start", 0.9);
    const double e1 = positive_value(c, "eta_stop", 1.1);
    if (e1 <= e0) throw ConfigError("task.eta_stop must exceed task.eta_start");
    const auto n = count_value(c, "eta_points", 401, 2);
    const auto single = optional_number(c, "single_eta");
    const auto branch_s = task_value<std::string>(c.cfg, "single_branch", "auto");
    std::optional<Branch> want;
    if (branch_s != "auto") {
        try {
            want = parse_branch(branch_s);
        } catch (const ParameterError& e) {
            throw ConfigError(e.what());
        }
    }
    const bool oracle = task_value<bool>(c.cfg, "oracle", false);
    if (oracle && c.cfg.clusters > 20) throw ConfigError("the Jacobian oracle needs spectral.M <= 20");
    const auto recipe = c.cfg.recipe();
    const double k = c.cfg.cavity.kappa;

    std::vector<double> omegas;
    std::vector<std::vector<double>> grids;
    std::vector<EtaScale> scales;
    for (double v : omegas_hz) {
        omegas.push_back(hz_to_rad(v));
        scales.emplace_back(recipe.table(omegas.back()), k);
        std::vector<double> g;
        if (single) g.push_back(scales.back().absolute(*single, units));
        else
            for (double x : roots::linear_grid(e0, e1, n)) g.push_back(scales.back().absolute(x, units));
        grids.push_back(std::move(g));
    }
    const auto sweeps = zeta_sweep(recipe, omegas, grids, c.workers);

    std::vector<std::string> cols{"omega_over_2pi_hz", "eta", "eta_normalized", "branch", "a0", "zeta_over_gamma_par",
                                  "residual"};
    if (oracle) cols.push_back("jacobian_zeta_over_gamma_par");
    io::CsvTable t(cols);
    std::vector<std::string> notes{"zeta is the smallest positive real root of the characteristic function",
                                   "residual is f(zeta) / max(kappa, zeta |f'(zeta)|)"};
    double worst = 0.0;
    for (std::size_t w = 0; w < sweeps.size(); ++w) {
        const auto& sw = sweeps[w];
        const auto ens = recipe.ensemble(sw.omega_coll);
        const double gpar = ens.gamma_par;
        const auto& sc = scales[w];
        for (auto s : sc.notes()) notes.push_back("Omega/2pi " + io::fmt(hz(sw.omega_coll)) + " Hz: " + s);
        double zmin = std::numeric_limits<double>::infinity();
        bool split = false;
        for (const auto& p : sw.points) {
            if (want && p.branch != *want) continue;
            std::vector<std::string> r{io::fmt(hz(sw.omega_coll)), io::fmt(sc.over_kappa(p.eta)),
                                       io::fmt(sc.normalized(p.eta)), to_string(p.branch), io::fmt(p.a0),
                                       io::fmt(p.zeta / gpar), io::fmt(p.residual)};
            if (oracle) {
                const double j = slowest_jacobian_rate(jacobian_cross_check(p.a0, ens, recipe.cavity));
                r.push_back(io::fmt(j / gpar));
                worst = std::max(worst, std::abs(p.zeta / j - 1.0));
            }
            t.row_strings(r);
            zmin = std::min(zmin, p.zeta / gpar);
            if (p.branch == Branch::Upper || p.branch == Branch::Lower) split = true;
            if (single)
                std::cout << "Omega/2pi " << io::fmt(hz(sw.omega_coll)) << " Hz eta/kappa " << io::fmt(sc.over_kappa(p.eta))
                          << " branch " << to_string(p.branch) << " zeta/gamma_par " << io::fmt(p.zeta / gpar) << '\n';
        }
        if (!single)
            std::cout << "Omega/2pi " << io::fmt(hz(sw.omega_coll)) << " Hz: "
                      << (split ? "two branches" : "single curve") << ", min zeta/gamma_par " << io::fmt(zmin) << '\n';
    }
    if (oracle) std::cout << "oracle: max relative mismatch " << io::fmt(worst) << '\n';
    c.write("zeta.csv", t, notes);
    return kOk;
}

// ---------------------------------------------------------------------------

int run_quench_cmd(Context& c, const Flags& fl) {
    if (fl.selftest) c.cfg.task["normal_form_selftest"] = true;
    const bool selftest = task_value<bool>(c.cfg, "normal_form_selftest", false);
    if (selftest) {
        io::CsvTable t({"r", "T", "pi_over_sqrt_r"});
        std::vector<double> rs, ts;
        double worst = 0.0;
        for (double r : roots::log_grid(1e-6, 1e-1, 11)) {
            const double tt = normal_form_transit_time(r), ref = std::numbers::pi / std::sqrt(r);
            t.row(r, tt, ref);
            rs.push_back(r);
            ts.push_back(tt);
            worst = std::max(worst, std::abs(tt / ref - 1.0));
        }
        const auto f = fit_power_law(rs, ts);
        c.write("normal_form.csv", t, {"dx/dt = r + x^2 through (-L, L), L = 1e3 sqrt(r)"});
        std::cout << "normal form: max |T/(pi/sqrt r) - 1| " << io::fmt(worst) << " fitted alpha " << io::fmt(f.alpha)
                  << '\n';
        return kOk;
    }

    const auto ens = c.cfg.ensemble();
    const auto tab = cooperativities(ens, c.cfg.cavity);
    const double k = c.cfg.cavity.kappa, gpar = ens.gamma_par;
    const EtaScale sc(tab, k);
    if (!sc.pair || sc.pair->degenerate()) throw ConfigError("quench needs a bistable ensemble at this Omega");
    const auto& pair = *sc.pair;
    const auto units = eta_units(c);
    const auto source_s = task_value<std::string>(c.cfg, "source", "upper");
    if (source_s != "upper" && source_s != "lower") throw ConfigError("task.source must be 'upper' or 'lower'");
    const Branch src = parse_branch(source_s);
    const auto init_v = optional_number(c, "eta_initial");
    const auto quench_v = optional_number(c, "eta_quench");
    const double rel_min = positive_value(c, "scan_rel_min", 1e-6);
    const double rel_max = positive_value(c, "scan_rel_max", 1e-1);
    if (rel_max <= rel_min) throw ConfigError("task.scan_rel_max must exceed task.scan_rel_min");
    const auto npts = count_value(c, "scan_points", 21, 6);
    const double t_max = positive_value(c, "t_max_gamma_par", 5000.0) / gpar;
    const double dt = positive_value(c, "sample_dt_gamma_par", 0.005) / gpar;
    const bool fit = task_value<bool>(c.cfg, "fit", true);
    const double fit_min = task_value<double>(c.cfg, "fit_min_t_gamma_par", 2.0) / gpar;
    const auto solver = solver_options(c);
    const auto model = model_choice(c, "adiabatic");
    c.cfg.resolved["cli"]["model"] = model;

    const double eta_c = src == Branch::Upper ? pair.eta_up : pair.eta_down;
    const double eta_init = init_v ? sc.absolute(*init_v, units) : default_initial_eta(pair, src);
    auto notes = sc.notes();
    notes.push_back("source " + source_s + " eta_c/kappa " + io::fmt(eta_c / k) + " eta_initial/kappa " +
                    io::fmt(eta_init / k) + " eta_initial_normalized " + io::fmt(sc.normalized(eta_init)));
    notes.push_back("transit time: time a^2 spends between the SN amplitudes a0sq_down and a0sq_up");

    bool partial = false;
    for (const auto& m : models_of(model)) {
        QuenchOptions qo;
        qo.model = m == "full" ? QuenchModel::Full : QuenchModel::Adiabatic;
        qo.sample_dt = dt;
        qo.solver = solver;

        if (quench_v) {
            const double eq = sc.absolute(*quench_v, units);
            const auto run = run_quench(ens, c.cfg.cavity, src, eta_init, eq, t_max, qo);
            partial = partial || run.partial;
            auto n = notes;
            n.push_back("eta_quench/kappa " + io::fmt(eq / k) + " eta_quench_normalized " + io::fmt(sc.normalized(eq)) +
                        " |eta-eta_c|/eta_c " + io::fmt(std::abs(eq - eta_c) / eta_c));
            n.push_back("transit_time_s " + io::fmt(run.transit_time) + " entered " + io::fmt(run.entered) + " exited " +
                        io::fmt(run.exited) + " settled " + io::fmt(run.settled) + " partial " + io::fmt(run.partial));
            io::CsvTable t({"t_seconds", "t_gamma_par", "a_sq", "sigma_z_central", "model"});
            for (std::size_t i = 0; i < run.t.size(); ++i)
                t.row(run.t[i], run.t[i] * gpar, run.a_sq[i], run.sigma_z_central[i], m);
            const auto pp = phase_portrait(run);
            io::CsvTable p({"a_sq", "da_sq_dt", "in_window"});
            for (const auto& q : pp) p.row(q.a_sq, q.da_sq_dt, run.window.contains(q.a_sq));
            const auto dip = portrait_dip(pp, run.window);
            n.push_back(dip.found ? "portrait dip at a_sq " + io::fmt(dip.a_sq) + " speed " + io::fmt(dip.speed) + " 1/s"
                                  : std::string("no portrait dip inside the window"));
            c.write(m + "_trajectory.csv", t, n);
            c.write(m + "_portrait.csv", p, n);
            std::cout << m << ": T " << io::fmt(run.transit_time) << " s = " << io::fmt(run.transit_time * gpar)
                      << " /gamma_par" << (run.partial ? " (partial: t_max reached)" : "") << '\n';
            continue;
        }

        const auto etas = approach_etas(eta_c, src, rel_min, rel_max, npts);
        const auto scan = transit_time_scan(ens, c.cfg.cavity, src, etas, t_max, qo, eta_init, c.workers);
        io::CsvTable t({"eta", "eta_normalized", "abs_deta", "rel_deta", "T_seconds", "T_gamma_par", "partial"});
        for (const auto& p : scan.points) {
            partial = partial || p.partial;
            t.row(p.eta / k, sc.normalized(p.eta), p.abs_deta / k, p.abs_deta / eta_c, p.transit_time,
                  p.transit_time * gpar, p.partial);
        }
        c.write(m + "_scan.csv", t, notes);
        if (!fit) continue;

        // x = |eta - eta_c| / eta_mid and T in units of 1/gamma_par
        auto [x, tt] = fit_domain(scan, fit_min);
        for (auto& v : x) v /= pair.eta_mid();
        for (auto& v : tt) v *= gpar;
        if (x.size() < 6) {
            std::cerr << m << ": only " << x.size() << " scan points with T >= fit_min_t_gamma_par, fit skipped\n";
            continue;
        }
        const auto f = fit_power_law(x, tt);
        std::ostringstream os;
        os << "# spincav quench fit, model " << m << ", source " << source_s << '\n'
           << "# config " << c.cfg.resolved.dump() << '\n'
           << "# T = T0 + beta x^-alpha with x = |eta - eta_c| / eta_mid and T in units of 1/gamma_par\n"
           << "alpha = " << io::fmt(f.alpha) << '\n'
           << "alpha_sd = " << io::fmt(f.sd_alpha) << '\n'
           << "beta = " << io::fmt(f.beta) << '\n'
           << "beta_sd = " << io::fmt(f.sd_beta) << '\n'
           << "T0 = " << io::fmt(f.t0) << '\n'
           << "T0_sd = " << io::fmt(f.sd_t0) << '\n'
           << "residual = " << io::fmt(f.residual) << '\n'
           << "n_points = " << f.n_points << '\n';
        const auto p = c.path(m + "_fit.txt");
        io::write_atomic(p, os.str());
        std::cout << "wrote " << p.string() << '\n';
        std::cout << m << " " << source_s << ": alpha " << io::fmt(f.alpha) << " beta " << io::fmt(f.beta) << " T0 "
                  << io::fmt(f.t0) << " (" << f.n_points << " points)\n";
    }
    if (partial) {
        std::cerr << "partial result: t_max reached before the trajectory settled\n";
        return kPartial;
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spincav: bistability and critical slowing down in a driven cavity with a broadened spin ensemble"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    Flags fl;
    app.add_option("--config", g.config, "JSON run config (defaults apply when omitted)");
    app.add_option("--out", g.out, "output directory (overrides output.dir)");
    app.add_option("--workers", g.workers, "worker threads for sweeps; 0 uses all cores");
    app.add_option("--model", g.model, "full | adiabatic | both")->check(CLI::IsMember({"full", "adiabatic", "both"}));
    app.add_option("--format", g.format, "output format")->check(CLI::IsMember({"csv"}));
    app.add_flag("--eta-normalized", g.eta_normalized, "drive values are normalized by the reference drive");

    auto* steady = app.add_subcommand("steady", "S-curve of stationary amplitudes");
    auto* sweep = app.add_subcommand("sweep-omega", "SN pairs over the collective coupling, per line shape");
    sweep->add_flag("--threshold", fl.threshold, "also locate the onset coupling");
    auto* threshold = app.add_subcommand("threshold", "onset coupling of bistability");
    auto* dyn = app.add_subcommand("dynamics", "trajectories after the drive switches on");
    dyn->add_option("--spacing", fl.spacing, "sample spacing")->check(CLI::IsMember({"log", "linear"}));
    dyn->add_option("--resume", fl.resume, "start from a saved state file");
    dyn->add_option("--save-state", fl.save_state, "write the final state here");
    auto* decay = app.add_subcommand("decay", "slowest decay rate along the S-curve");
    decay->add_flag("--oracle", fl.oracle, "compare with the dense Jacobian (M <= 20)");
    decay->add_option("--eta", fl.single_eta, "single drive value (in eta_units)");
    decay->add_option("--branch", fl.single_branch, "branch for the single point: lower, upper, unique")
        ->check(CLI::IsMember({"lower", "upper", "unique", "auto"}));
    auto* quench = app.add_subcommand("quench", "transit times through the SN ghost");
    quench->add_flag("--normal-form-selftest", fl.selftest, "check T = pi/sqrt(r) on dx/dt = r + x^2");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }

    try {
        CLI::App* sub = app.get_subcommands().front();
        Context c;
        c.g = g;
        const json doc = g.config.empty() ? json::object() : read_json_file(g.config);
        c.cfg = parse_config(doc, sub->get_name());
        if (!g.out.empty()) {
            c.cfg.out_dir = g.out;
            c.cfg.resolved["output"]["dir"] = g.out;
        }
        c.cfg.resolved["cli"]["eta_normalized"] = g.eta_normalized;
        c.workers = g.workers == 0 ? default_workers() : g.workers;
        c.dir = c.cfg.out_dir;

        if (sub == steady) return run_steady(c);
        if (sub == sweep) return run_sweep(c, fl);
        if (sub == threshold) return run_threshold(c);
        if (sub == dyn) return run_dynamics(c, fl);
        if (sub == decay) return run_decay(c, fl);
        if (sub == quench) return run_quench_cmd(c, fl);
    } catch (const ParameterError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNumerical;
    }
    return kConfig;
}
