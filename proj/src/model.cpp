#include "labprod/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>

#include <boost/math/tools/roots.hpp>

#include "labprod/errors.hpp"

namespace labprod {

namespace {

void require_positive_productivity(double c) {
  if (!(c > 0.0) || !std::isfinite(c)) {
    std::ostringstream msg;
    msg << "productivity must be positive and finite, got c=" << c;
    throw DomainError(msg.str());
  }
}

void require_finite(double value, const char* what, double c, const ModelParams& p) {
  if (std::isfinite(value)) return;
  std::ostringstream msg;
  msg.precision(17);
  msg << what << " is not finite at c=" << c << " (beta=" << p.beta << ", mu=" << p.mu
      << ", A=" << p.A << ", gamma=" << p.gamma << ")";
  throw NumericError(msg.str());
}

}  // namespace

double softplus(double x) noexcept {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

void validate(const ModelParams& p) {
  if (!std::isfinite(p.beta) || !std::isfinite(p.mu) || !std::isfinite(p.A) ||
      !std::isfinite(p.gamma)) {
    throw DomainError("model parameters must be finite");
  }
  if (!(p.A > 0.0)) throw DomainError("capacity amplitude A must be positive");
  if (!(p.gamma >= 0.0)) throw DomainError("capacity exponent gamma must be non-negative");
}

CapacityLaw::CapacityLaw(double A, double gamma) : A_(A), gamma_(gamma) {
  if (!(A > 0.0) || !std::isfinite(A)) throw DomainError("capacity amplitude A must be positive");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
    throw DomainError("capacity exponent gamma must be non-negative");
  }
}

double CapacityLaw::log_capacity(double c) const {
  require_positive_productivity(c);
  return std::log(A_) - gamma_ * std::log(c);
}

double CapacityLaw::operator()(double c) const {
  require_positive_productivity(c);
  if (gamma_ == 0.0) return A_;
  return A_ * std::pow(c, -gamma_);
}

double Limiter::capacity(double c) const {
  if (kind_ == Kind::unbounded) {
    require_positive_productivity(c);
    return std::numeric_limits<double>::infinity();
  }
  return law_(c);
}

double Limiter::value(double c, double n) const {
  require_positive_productivity(c);
  if (!(n >= 0.0)) throw DomainError("occupancy must be non-negative");
  if (kind_ == Kind::unbounded) return 1.0;
  const double g = law_(c);
  if (n >= g) return 0.0;
  return (g - n) / g;
}

double capacity(double c, const CapacityLaw& law) { return law(c); }

double limiter_value(double c, double n, const Limiter& lim) { return lim.value(c, n); }

double log_mean_occupancy(double c, const ModelParams& p) {
  require_positive_productivity(c);
  const double log_g = std::log(p.A) - p.gamma * std::log(c);
  const double x = p.beta * (c - p.mu);
  // ln[g / (g e^x + 1)] = ln g - ln(1 + e^{ln g + x})
  const double result = log_g - softplus(log_g + x);
  require_finite(result, "log mean occupancy", c, p);
  return result;
}

double mean_occupancy(double c, const ModelParams& p) {
  const double result = std::exp(log_mean_occupancy(c, p));
  require_finite(result, "mean occupancy", c, p);
  return result;
}

double log_boltzmann_occupancy(double c, double beta, double mu) {
  require_positive_productivity(c);
  return -beta * (c - mu);
}

double boltzmann_occupancy(double c, double beta, double mu) {
  const double log_n = log_boltzmann_occupancy(c, beta, mu);
  const double n = std::exp(log_n);
  if (!std::isfinite(n)) {
    std::ostringstream msg;
    msg << "Boltzmann occupancy overflows: exponent " << log_n << " at c=" << c;
    throw NumericError(msg.str());
  }
  return n;
}

double solve_occupancy_fixed_point(double c, const Limiter& lim, double beta, double mu,
                                   double tol) {
  require_positive_productivity(c);
  if (!(tol > 0.0)) throw DomainError("tolerance must be positive");
  const double log_w = -beta * (c - mu);
  if (!std::isfinite(log_w)) throw NumericError("non-finite Boltzmann exponent");

  // L == 1 reduces the equation to n = w.
  if (!lim.bounded()) return boltzmann_occupancy(c, beta, mu);

  const double w = std::exp(log_w);
  const double g = lim.capacity(c);

  // f(n) = n - L(c, n) w, rescaled by 1/w when w > 1 so it stays finite.
  // f(0) = -w < 0, and f >= 0 at both n = w (L <= 1) and n = g (L = 0).
  const double inv_w = std::exp(-log_w);
  auto f = [&](double n) {
    if (log_w >= 0.0) return n * inv_w - lim.value(c, n);
    return n - lim.value(c, n) * w;
  };

  const double hi = std::min(g, w);
  if (f(hi) == 0.0) return hi;

  auto done = [tol](double a, double b) { return std::fabs(b - a) <= tol * std::max(a, b); };
  std::uintmax_t max_iter = 4000;
  const auto [a, b] = boost::math::tools::bisect(f, 0.0, hi, done, max_iter);
  if (max_iter >= 4000) throw SolverError("fixed-point bisection did not converge");
  return 0.5 * (a + b);
}

double log_partition(double c, const ModelParams& p) {
  require_positive_productivity(c);
  const double log_g = std::log(p.A) - p.gamma * std::log(c);
  const double g = std::exp(log_g);
  const double x = p.beta * (c - p.mu);
  // g ln(1 + e^{-x}/g)
  const double result = g * softplus(-x - log_g);
  require_finite(result, "log partition function", c, p);
  return result;
}

namespace {

// Positive where mean_occupancy increases with c, negative where it falls.
double stationarity_gap(double c, const ModelParams& p) {
  return std::log(p.A) - std::log(p.gamma) + std::log(-p.beta) - p.beta * p.mu +
         (1.0 - p.gamma) * std::log(c) + p.beta * c;
}

void require_interior_peak(const ModelParams& p) {
  validate(p);
  if (!(p.beta < 0.0) || !(p.gamma > 0.0)) {
    throw PreconditionError(
        "no interior peak: peak_productivity needs beta < 0 and gamma > 0 "
        "(mean occupancy is monotone otherwise)");
  }
}

double solve_peak(const ModelParams& p, double lo, double hi) {
  auto h = [&p](double c) { return stationarity_gap(c, p); };
  const double h_lo = h(lo);
  const double h_hi = h(hi);
  if (h_lo == 0.0) return lo;
  if (h_hi == 0.0) return hi;
  if (!(h_lo > 0.0 && h_hi < 0.0)) {
    std::ostringstream msg;
    msg << "no peak inside bracket [" << lo << ", " << hi << "]";
    throw SolverError(msg.str());
  }
  auto done = [](double a, double b) { return std::fabs(b - a) <= 1e-13 * std::max(a, b); };
  std::uintmax_t max_iter = 500;
  const auto [a, b] = boost::math::tools::toms748_solve(h, lo, hi, h_lo, h_hi, done, max_iter);
  return 0.5 * (a + b);
}

}  // namespace

double peak_productivity(const ModelParams& p, std::pair<double, double> bracket) {
  require_interior_peak(p);
  auto [lo, hi] = bracket;
  if (!(lo > 0.0) || !(hi > lo) || !std::isfinite(hi)) {
    throw DomainError("peak bracket must satisfy 0 < c_lo < c_hi");
  }
  // For gamma < 1 the gap also has a root below its maximum; that one is a
  // minimum of the occupancy, so the search starts at the maximum.
  if (p.gamma < 1.0) {
    const double c_star = (1.0 - p.gamma) / (-p.beta);
    if (c_star >= hi) throw SolverError("no peak inside bracket");
    lo = std::max(lo, c_star);
  }
  return solve_peak(p, lo, hi);
}

double peak_productivity(const ModelParams& p) {
  require_interior_peak(p);
  const double scale = 1.0 / -p.beta;
  double lo = p.gamma < 1.0 ? (1.0 - p.gamma) * scale : scale;
  if (p.gamma >= 1.0) {
    for (int i = 0; i < 300 && stationarity_gap(lo, p) <= 0.0; ++i) lo *= 0.1;
  }
  if (!(stationarity_gap(lo, p) > 0.0)) {
    throw SolverError("mean occupancy is decreasing everywhere; no interior peak");
  }
  double hi = std::max(lo, scale) * 2.0;
  for (int i = 0; i < 200 && stationarity_gap(hi, p) >= 0.0; ++i) hi *= 2.0;
  return solve_peak(p, lo, hi);
}

}  // namespace labprod
