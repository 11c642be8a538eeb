#pragma once

// Closed-form equilibrium law for the distribution of workers over
// productivity levels: capacity g(c) = A c^-gamma, the limiter L(c, n),
// the generalized Fermi-Dirac occupancy and its partition function.
//
// Units: productivity c in 10^3 yen/person, beta in its inverse.

#include <limits>
#include <utility>

namespace labprod {

struct ModelParams {
  double beta = 0.0;   // inverse temperature; negative in the fitted regime
  double mu = 0.0;     // chemical-potential-like offset
  double A = 1.0;      // capacity amplitude
  double gamma = 0.0;  // capacity exponent
};

/// Throws DomainError unless A > 0, gamma >= 0 and all fields are finite.
void validate(const ModelParams& p);

/// Power-law capacity g(c) = A c^-gamma.
class CapacityLaw {
 public:
  CapacityLaw(double A, double gamma);

  double A() const noexcept { return A_; }
  double gamma() const noexcept { return gamma_; }

  double operator()(double c) const;
  double log_capacity(double c) const;

 private:
  double A_;
  double gamma_;
};

/// Acceptance attenuation for a destination cluster. The linear ramp is
/// (g - n)/g clipped at zero; the unbounded variant is identically one.
class Limiter {
 public:
  enum class Kind { linear_ramp, unbounded };

  static Limiter linear_ramp(CapacityLaw law) { return Limiter(Kind::linear_ramp, law); }
  static Limiter unbounded() { return Limiter(Kind::unbounded, CapacityLaw(1.0, 0.0)); }

  Kind kind() const noexcept { return kind_; }
  bool bounded() const noexcept { return kind_ == Kind::linear_ramp; }
  const CapacityLaw& law() const noexcept { return law_; }

  /// g(c), or +infinity for the unbounded variant.
  double capacity(double c) const;

  double value(double c, double n) const;

 private:
  Limiter(Kind kind, CapacityLaw law) : kind_(kind), law_(law) {}

  Kind kind_;
  CapacityLaw law_;
};

double capacity(double c, const CapacityLaw& law);

double limiter_value(double c, double n, const Limiter& lim);

/// Mean occupancy g / (g e^{beta (c - mu)} + 1).
double mean_occupancy(double c, const ModelParams& p);

/// Natural log of mean_occupancy; finite wherever the inputs are, even when
/// the occupancy itself would underflow.
double log_mean_occupancy(double c, const ModelParams& p);

/// Boltzmann limit e^{-beta (c - mu)}. Throws NumericError on overflow.
double boltzmann_occupancy(double c, double beta, double mu);

double log_boltzmann_occupancy(double c, double beta, double mu);

/// Solves n = L(c, n) e^{-beta (c - mu)} for n >= 0 by bisection. The limiter
/// must be non-increasing in n. `tol` is the relative width of the final
/// bracket.
double solve_occupancy_fixed_point(double c, const Limiter& lim, double beta, double mu,
                                   double tol = 1e-13);

/// ln Z with Z = (1 + e^{-beta (c - mu)} / g)^g.
double log_partition(double c, const ModelParams& p);

/// Productivity at which mean_occupancy peaks, from the stationarity
/// condition g(c) e^{beta (c - mu)} = -gamma / (beta c). Requires beta < 0
/// and gamma > 0.
double peak_productivity(const ModelParams& p, std::pair<double, double> bracket);

/// As above with an automatically widened bracket.
double peak_productivity(const ModelParams& p);

/// Numerically stable ln(1 + e^x).
double softplus(double x) noexcept;

}  // namespace labprod
