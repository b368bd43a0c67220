#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace spincav {

inline constexpr double two_pi = 2.0 * std::numbers::pi;

// Rates at the I/O boundary are nu = rate / 2pi in Hz; everything inside is rad/s.
inline constexpr double hz_to_rad(double hz) noexcept { return two_pi * hz; }
inline constexpr double rad_to_hz(double rad) noexcept { return rad / two_pi; }

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid physical or configuration parameters.
struct ParameterError : Error {
    using Error::Error;
};

// Root finding, continuation or integration failed to converge.
struct NumericalError : Error {
    using Error::Error;
};

// Adaptive step collapsed below the representable resolution.
struct StiffnessError : NumericalError {
    StiffnessError(const std::string& what, double t, double h)
        : NumericalError(what), time(t), step(h) {}
    double time;
    double step;
};

inline void require(bool ok, const std::string& msg) {
    if (!ok) throw ParameterError(msg);
}

inline bool relative_close(double a, double b, double rel) noexcept {
    return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b));
}

}  // namespace spincav
