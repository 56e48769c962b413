#pragma once

#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace cwfsim {

using Complex = std::complex<double>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr Complex kI{0.0, 1.0};

// CODATA 2018, SI.
namespace phys {
inline constexpr double hbar = 1.054571817e-34;         // J s
inline constexpr double electron_mass = 9.1093837015e-31;  // kg
inline constexpr double elementary_charge = 1.602176634e-19;  // C
inline constexpr double boltzmann = 1.380649e-23;        // J/K
inline constexpr double vacuum_permittivity = 8.8541878128e-12;  // F/m
inline constexpr double electron_volt = elementary_charge;  // J
}  // namespace phys

// Configuration-boundary unit helpers.
inline constexpr double ev(double v) { return v * phys::electron_volt; }
inline constexpr double nm(double v) { return v * 1e-9; }
inline constexpr double fs(double v) { return v * 1e-15; }
inline constexpr double ps(double v) { return v * 1e-12; }
inline constexpr double to_ev(double joules) { return joules / phys::electron_volt; }
inline constexpr double to_nm(double meters) { return meters * 1e9; }

/// Thrown when an operation is asked to evaluate something undefined for its
/// input (zero-norm field, k = 0 pseudospin angle, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Thrown when two objects that must share a discretization do not.
class GridMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace cwfsim
