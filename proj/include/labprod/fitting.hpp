#pragma once

// Four-parameter chi-square estimation of (beta, mu, A, gamma) from a binned
// mean-occupancy curve.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "labprod/model.hpp"

namespace labprod {

struct CurveBin {
  double c_center = 0.0;
  double n_mean = 0.0;
  double weight = 1.0;
};

/// Bins sorted by strictly increasing c_center with positive means.
class BinnedCurve {
 public:
  BinnedCurve() = default;
  /// Sorts by c_center; throws DataError on duplicates, non-positive c or
  /// n_mean, or weights below 1.
  explicit BinnedCurve(std::vector<CurveBin> bins);

  std::span<const CurveBin> bins() const noexcept { return bins_; }
  std::size_t size() const noexcept { return bins_.size(); }
  bool empty() const noexcept { return bins_.empty(); }

 private:
  std::vector<CurveBin> bins_;
};

/// Value returned by chi_square where the model is not finite.
inline constexpr double kChiSquarePenalty = 1e100;

/// sum_b w_b (ln n_b - ln nbar(c_b; p))^2
double chi_square(const ModelParams& p, const BinnedCurve& data);

struct FitResult {
  ModelParams params;
  double chi2 = 0.0;
  std::uint64_t n_evals = 0;
  bool converged = false;
  int start_index = -1;
};

struct FitOptions {
  /// Simplex diameter tolerance, relative to 1 + |x| in scaled coordinates.
  double tol = 1e-9;
  double chi2_spread = 1e-10;
  std::uint64_t max_evals_per_start = 10000;
  /// Starting inverse temperatures; log-spaced over [-1e-3, -1e-5] by default.
  std::vector<double> start_betas{-1e-3, -3.1622776601683794e-4, -1e-4, -3.1622776601683795e-5, -1e-5};
  std::vector<double> start_gammas{0.5, 1.0, 1.5, 2.0};
};

/// Multi-start Nelder-Mead over (beta, mu, ln A, gamma). Requires at least 8
/// bins spanning two decades in c (IllPosed otherwise, raised as DataError).
FitResult fit(const BinnedCurve& data, const FitOptions& options = {});

/// Heuristic starting point for a given (beta, gamma): A from the tail bins,
/// mu from the lowest bin assuming the Boltzmann branch.
ModelParams initial_guess(const BinnedCurve& data, double beta, double gamma);

struct LogBinSpec {
  double c_min = 1e3;
  double c_max = 1e6;
  int count = 50;
};

/// Bin centers c_min (c_max/c_min)^{k/(count-1)}, k = 0..count-1.
std::vector<double> log_spaced_centers(const LogBinSpec& spec);

/// Model curve at the given centers times exp(sigma z_b), z_b ~ N(0,1).
BinnedCurve synthetic_curve(const ModelParams& p, std::span<const double> centers, double sigma,
                            std::uint64_t seed);

BinnedCurve synthetic_curve(const ModelParams& p, const LogBinSpec& spec, double sigma,
                            std::uint64_t seed);

}  // namespace labprod
