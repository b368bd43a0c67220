// spectral.hpp: spin spectral densities and their discretization into clusters.
//
// A continuous density rho(omega) is sampled on M equal-width frequency bins and
// mapped to cluster couplings g_j = Omega * sqrt(rho_j / sum_l rho_l), so that
// sum_j g_j^2 = Omega^2 holds by construction. The normalization constant of rho
// never appears.

#pragma once

#include "spincav/common.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace spincav {

enum class SpectralFamily { QGaussian, Gaussian, Lorentzian };

inline std::string to_string(SpectralFamily f) {
    switch (f) {
        case SpectralFamily::QGaussian: return "qgaussian";
        case SpectralFamily::Gaussian: return "gaussian";
        case SpectralFamily::Lorentzian: return "lorentzian";
    }
    return "unknown";
}

inline SpectralFamily parse_family(const std::string& s) {
    if (s == "qgaussian" || s == "q-gaussian" || s == "qG") return SpectralFamily::QGaussian;
    if (s == "gaussian" || s == "G") return SpectralFamily::Gaussian;
    if (s == "lorentzian" || s == "L") return SpectralFamily::Lorentzian;
    throw ParameterError("unknown spectral family '" + s + "'");
}

struct SpectralShape {
    SpectralFamily family = SpectralFamily::QGaussian;
    double q = 1.39;        // only read for QGaussian
    double omega_s = 0.0;   // center, rad/s
    double fwhm = 1.0;      // rad/s

    void validate() const {
        require(std::isfinite(fwhm) && fwhm > 0.0, "spectral fwhm must be positive");
        require(std::isfinite(omega_s), "spectral center must be finite");
        if (family == SpectralFamily::QGaussian)
            require(q > 1.0 && q < 3.0, "q-Gaussian shape parameter must satisfy 1 < q < 3");
    }
};

/// Width parameter Delta of the q-Gaussian with the given FWHM.
/// q == 1 has no q-Gaussian representative; use SpectralFamily::Gaussian.
inline double fwhm_to_width(double q, double fwhm) {
    require(fwhm > 0.0, "fwhm must be positive");
    if (q == 1.0) throw ParameterError("q = 1 is the Gaussian limit; use the Gaussian family");
    require(q > 1.0 && q < 3.0, "q-Gaussian shape parameter must satisfy 1 < q < 3");
    return fwhm / (2.0 * std::sqrt((std::pow(2.0, q) - 2.0) / (2.0 * q - 2.0)));
}

inline double width_to_fwhm(double q, double width) {
    require(width > 0.0, "width must be positive");
    if (q == 1.0) throw ParameterError("q = 1 is the Gaussian limit; use the Gaussian family");
    require(q > 1.0 && q < 3.0, "q-Gaussian shape parameter must satisfy 1 < q < 3");
    return 2.0 * width * std::sqrt((std::pow(2.0, q) - 2.0) / (2.0 * q - 2.0));
}

/// Unnormalized density at offset delta = omega - omega_s; peak value 1.
inline double density_at_offset(const SpectralShape& shape, double delta) {
    switch (shape.family) {
        case SpectralFamily::QGaussian: {
            const double width = fwhm_to_width(shape.q, shape.fwhm);
            const double u = delta * delta / (width * width);
            // [1 + (q-1) u]^(1/(1-q)), written through log1p so q -> 1+ stays accurate
            return std::exp(-std::log1p((shape.q - 1.0) * u) / (shape.q - 1.0));
        }
        case SpectralFamily::Gaussian: {
            const double sigma = shape.fwhm / (2.0 * std::sqrt(2.0 * std::numbers::ln2));
            return std::exp(-0.5 * delta * delta / (sigma * sigma));
        }
        case SpectralFamily::Lorentzian: {
            const double x = 2.0 * delta / shape.fwhm;
            return 1.0 / (1.0 + x * x);
        }
    }
    return 0.0;
}

inline double density_value(const SpectralShape& shape, double omega) {
    shape.validate();
    return density_at_offset(shape, omega - shape.omega_s);
}

// ---------------------------------------------------------------------------

struct Cluster {
    double offset = 0.0;    // omega_j - omega_s, rad/s
    double coupling = 0.0;  // g_j, rad/s
};

struct SpinRates {
    double gamma_perp = 0.0;  // rad/s
    double gamma_par = 0.0;   // rad/s
};

struct Ensemble {
    double omega_s = 0.0;
    std::vector<Cluster> clusters;
    double gamma_perp = 0.0;
    double gamma_par = 0.0;
    double omega_coll = 0.0;

    std::size_t size() const noexcept { return clusters.size(); }

    double frequency(std::size_t j) const { return omega_s + clusters[j].offset; }

    // Detuning Delta_j = omega_j - omega_p, computed from the offset to keep
    // symmetric pairs exactly antisymmetric on resonance.
    double detuning(std::size_t j, double omega_p) const {
        return clusters[j].offset + (omega_s - omega_p);
    }

    double coupling_norm_sq() const {
        double s = 0.0;
        for (const auto& c : clusters) s += c.coupling * c.coupling;
        return s;
    }

    /// Cluster sitting on (or nearest to) the center frequency.
    std::optional<std::size_t> central_index() const {
        if (clusters.empty()) return std::nullopt;
        std::size_t best = 0;
        for (std::size_t j = 1; j < clusters.size(); ++j)
            if (std::abs(clusters[j].offset) < std::abs(clusters[best].offset)) best = j;
        return best;
    }

    /// Offsets antisymmetric and couplings symmetric under j -> M-1-j.
    bool is_symmetric(double rel_tol = 1e-12) const {
        const std::size_t m = clusters.size();
        double scale_w = 0.0, scale_g = 0.0;
        for (const auto& c : clusters) {
            scale_w = std::max(scale_w, std::abs(c.offset));
            scale_g = std::max(scale_g, std::abs(c.coupling));
        }
        for (std::size_t j = 0; j < m; ++j) {
            const auto& a = clusters[j];
            const auto& b = clusters[m - 1 - j];
            if (std::abs(a.offset + b.offset) > rel_tol * scale_w) return false;
            if (std::abs(a.coupling - b.coupling) > rel_tol * scale_g) return false;
        }
        return true;
    }

    void validate() const {
        require(!clusters.empty(), "ensemble has no clusters");
        require(gamma_perp > 0.0 && gamma_par > 0.0, "spin relaxation rates must be positive");
        for (const auto& c : clusters)
            require(std::isfinite(c.offset) && c.coupling >= 0.0, "cluster couplings must be non-negative");
    }
};

struct DiscretizationWindow {
    double lo = 0.0;  // absolute angular frequency, rad/s
    double hi = 0.0;
};

inline DiscretizationWindow default_window(const SpectralShape& shape, double multiplier = 4.0) {
    return {shape.omega_s - multiplier * shape.fwhm, shape.omega_s + multiplier * shape.fwhm};
}

/// Equal-width bins over the window, cluster at each bin midpoint.
inline Ensemble discretize(const SpectralShape& shape, double omega_coll, std::size_t m,
                           const DiscretizationWindow& window, const SpinRates& rates) {
    shape.validate();
    require(m >= 1, "discretization needs at least one cluster");
    require(omega_coll >= 0.0, "collective coupling must be non-negative");
    require(window.hi > window.lo, "discretization window is empty");
    const double half = 0.5 * (window.hi - window.lo);
    const double center = 0.5 * (window.hi + window.lo);
    if (std::abs(center - shape.omega_s) > 1e-12 * std::max(std::abs(shape.omega_s), half))
        throw ParameterError("discretization window must be symmetric about omega_s");

    Ensemble ens;
    ens.omega_s = shape.omega_s;
    ens.gamma_perp = rates.gamma_perp;
    ens.gamma_par = rates.gamma_par;
    ens.omega_coll = omega_coll;
    ens.clusters.resize(m);

    const double bin = 2.0 * half / static_cast<double>(m);
    const double mid = 0.5 * static_cast<double>(m - 1);
    std::vector<double> rho(m);
    for (std::size_t j = 0; j < m; ++j) {
        // (j - mid) is exact, so mirrored bins get bit-identical |offset|
        ens.clusters[j].offset = (static_cast<double>(j) - mid) * bin;
        rho[j] = density_at_offset(shape, ens.clusters[j].offset);
    }
    // Pairwise summation from the outside in keeps the sum independent of direction.
    double total = 0.0;
    for (std::size_t j = 0; j < m / 2; ++j) total += rho[j] + rho[m - 1 - j];
    if (m % 2 == 1) total += rho[m / 2];
    if (!(total > 0.0)) throw NumericalError("spectral density vanishes on the whole window");
    for (std::size_t j = 0; j < m; ++j) ens.clusters[j].coupling = omega_coll * std::sqrt(rho[j] / total);
    return ens;
}

// ---------------------------------------------------------------------------
// Two-column table: omega_hz g_hz (rate/2pi). Comment lines carry the rates.

inline void write_ensemble_table(std::ostream& os, const Ensemble& ens) {
    os.precision(17);
    os << "# omega_s_hz: " << rad_to_hz(ens.omega_s) << '\n'
       << "# gamma_perp_hz: " << rad_to_hz(ens.gamma_perp) << '\n'
       << "# gamma_par_hz: " << rad_to_hz(ens.gamma_par) << '\n'
       << "# omega_coll_hz: " << rad_to_hz(ens.omega_coll) << '\n'
       << "# clusters: " << ens.size() << '\n'
       << "omega_hz g_hz\n";
    for (std::size_t j = 0; j < ens.size(); ++j)
        os << rad_to_hz(ens.frequency(j)) << ' ' << rad_to_hz(ens.clusters[j].coupling) << '\n';
}

inline Ensemble read_ensemble_table(std::istream& is) {
    Ensemble ens;
    std::optional<double> omega_s;
    std::vector<std::pair<double, double>> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto colon = line.find(':');
            if (colon == std::string::npos) continue;
            std::string key = line.substr(1, colon - 1);
            key.erase(0, key.find_first_not_of(' '));
            const double v = std::stod(line.substr(colon + 1));
            if (key == "omega_s_hz") omega_s = hz_to_rad(v);
            else if (key == "gamma_perp_hz") ens.gamma_perp = hz_to_rad(v);
            else if (key == "gamma_par_hz") ens.gamma_par = hz_to_rad(v);
            else if (key == "omega_coll_hz") ens.omega_coll = hz_to_rad(v);
            continue;
        }
        if (line.rfind("omega_hz", 0) == 0) continue;
        std::istringstream ls(line);
        double w = 0.0, g = 0.0;
        if (!(ls >> w >> g)) throw ParameterError("malformed ensemble table row: " + line);
        rows.emplace_back(hz_to_rad(w), hz_to_rad(g));
    }
    if (rows.empty()) throw ParameterError("ensemble table has no rows");
    if (!omega_s) {
        double s = 0.0;
        for (const auto& r : rows) s += r.first;
        omega_s = s / static_cast<double>(rows.size());
    }
    ens.omega_s = *omega_s;
    for (const auto& [w, g] : rows) ens.clusters.push_back({w - *omega_s, g});
    return ens;
}

}  // namespace spincav
