#include "labprod/fitting.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "labprod/errors.hpp"
#include "labprod/simulator.hpp"

namespace labprod {

BinnedCurve::BinnedCurve(std::vector<CurveBin> bins) : bins_(std::move(bins)) {
  std::sort(bins_.begin(), bins_.end(),
            [](const CurveBin& a, const CurveBin& b) { return a.c_center < b.c_center; });
  for (std::size_t i = 0; i < bins_.size(); ++i) {
    const auto& b = bins_[i];
    if (!(b.c_center > 0.0) || !std::isfinite(b.c_center)) {
      throw DataError("bin centers must be positive and finite");
    }
    if (!(b.n_mean > 0.0) || !std::isfinite(b.n_mean)) {
      throw DataError("bin means must be positive and finite");
    }
    if (!(b.weight >= 1.0) || !std::isfinite(b.weight)) {
      throw DataError("bin weights must be at least 1");
    }
    if (i > 0 && !(bins_[i - 1].c_center < b.c_center)) {
      throw DataError("bin centers must be distinct");
    }
  }
}

double chi_square(const ModelParams& p, const BinnedCurve& data) {
  if (data.empty()) throw PreconditionError("chi_square needs at least one bin");
  if (!(p.A > 0.0) || !(p.gamma >= 0.0) || !std::isfinite(p.A) || !std::isfinite(p.beta) ||
      !std::isfinite(p.mu) || !std::isfinite(p.gamma)) {
    return kChiSquarePenalty;
  }
  double total = 0.0;
  for (const auto& b : data.bins()) {
    double model = 0.0;
    try {
      model = log_mean_occupancy(b.c_center, p);
    } catch (const NumericError&) {
      return kChiSquarePenalty;
    }
    const double r = std::log(b.n_mean) - model;
    total += b.weight * r * r;
  }
  if (!std::isfinite(total)) return kChiSquarePenalty;
  return std::min(total, kChiSquarePenalty);
}

ModelParams initial_guess(const BinnedCurve& data, double beta, double gamma) {
  const auto bins = data.bins();
  // Tail: n ~ g(c) = A c^-gamma, averaged over the last few bins.
  const std::size_t tail = std::min<std::size_t>(3, bins.size());
  double log_a = 0.0;
  for (std::size_t i = bins.size() - tail; i < bins.size(); ++i) {
    log_a += std::log(bins[i].n_mean) + gamma * std::log(bins[i].c_center);
  }
  log_a /= static_cast<double>(tail);
  // Head: ln n ~ -beta (c - mu).
  const auto& first = bins.front();
  ModelParams p;
  p.beta = beta;
  p.mu = first.c_center + std::log(first.n_mean) / beta;
  p.A = std::exp(log_a);
  p.gamma = gamma;
  return p;
}

namespace {

constexpr std::size_t kDim = 4;
using Point = std::array<double, kDim>;

// Scaled coordinates (beta S, mu / S, ln A, gamma) keep every axis O(1).
struct Scaling {
  double S = 1.0;

  Point to_point(const ModelParams& p) const { return {p.beta * S, p.mu / S, std::log(p.A), p.gamma}; }
  ModelParams to_params(const Point& z) const {
    ModelParams p;
    p.beta = z[0] / S;
    p.mu = z[1] * S;
    p.A = std::exp(z[2]);
    p.gamma = z[3];
    return p;
  }
};

double norm(const Point& z) {
  double s = 0.0;
  for (double v : z) s += v * v;
  return std::sqrt(s);
}

double distance(const Point& a, const Point& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < kDim; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

struct Vertex {
  Point z;
  double f;
};

struct SimplexOutcome {
  Vertex best;
  bool converged = false;
};

template <typename Objective>
SimplexOutcome nelder_mead(Objective& objective, const Point& start, const Point& step,
                           const FitOptions& options, std::uint64_t& evals) {
  std::array<Vertex, kDim + 1> simplex;
  simplex[0] = {start, objective(start)};
  ++evals;
  for (std::size_t i = 0; i < kDim; ++i) {
    Point z = start;
    z[i] += step[i];
    simplex[i + 1] = {z, objective(z)};
    ++evals;
  }

  auto blend = [](const Point& a, const Point& b, double t) {
    Point out;
    for (std::size_t i = 0; i < kDim; ++i) out[i] = a[i] + t * (b[i] - a[i]);
    return out;
  };

  while (true) {
    std::sort(simplex.begin(), simplex.end(), [](const Vertex& a, const Vertex& b) { return a.f < b.f; });
    double diameter = 0.0;
    for (std::size_t i = 1; i <= kDim; ++i) diameter = std::max(diameter, distance(simplex[i].z, simplex[0].z));
    const bool small = diameter < options.tol * (1.0 + norm(simplex[0].z));
    const bool flat = simplex[kDim].f - simplex[0].f < options.chi2_spread;
    if (small && flat) return {simplex[0], true};
    if (evals >= options.max_evals_per_start) return {simplex[0], false};

    Point centroid{};
    for (std::size_t i = 0; i < kDim; ++i) {
      for (std::size_t d = 0; d < kDim; ++d) centroid[d] += simplex[i].z[d] / static_cast<double>(kDim);
    }
    auto& worst = simplex[kDim];

    const Point reflected = blend(centroid, worst.z, -1.0);
    const double f_reflected = objective(reflected);
    ++evals;

    if (f_reflected < simplex[0].f) {
      const Point expanded = blend(centroid, worst.z, -2.0);
      const double f_expanded = objective(expanded);
      ++evals;
      worst = f_expanded < f_reflected ? Vertex{expanded, f_expanded} : Vertex{reflected, f_reflected};
      continue;
    }
    if (f_reflected < simplex[kDim - 1].f) {
      worst = {reflected, f_reflected};
      continue;
    }
    if (f_reflected < worst.f) {
      const Point outside = blend(centroid, reflected, 0.5);
      const double f_outside = objective(outside);
      ++evals;
      if (f_outside <= f_reflected) {
        worst = {outside, f_outside};
        continue;
      }
    } else {
      const Point inside = blend(centroid, worst.z, 0.5);
      const double f_inside = objective(inside);
      ++evals;
      if (f_inside < worst.f) {
        worst = {inside, f_inside};
        continue;
      }
    }
    // shrink toward the best vertex
    for (std::size_t i = 1; i <= kDim; ++i) {
      simplex[i].z = blend(simplex[0].z, simplex[i].z, 0.5);
      simplex[i].f = objective(simplex[i].z);
      ++evals;
    }
  }
}

Point initial_step(const Point& z) {
  return {0.25 * std::max(std::fabs(z[0]), 0.1), 0.25 * std::max(std::fabs(z[1]), 0.1), 0.5, 0.2};
}

FitResult fit_from(const BinnedCurve& data, const Scaling& scaling, const ModelParams& guess,
                   const FitOptions& options) {
  auto objective = [&](const Point& z) {
    if (z[3] < 0.0) return kChiSquarePenalty;
    return chi_square(scaling.to_params(z), data);
  };
  std::uint64_t evals = 0;
  Point start = scaling.to_point(guess);
  SimplexOutcome outcome = nelder_mead(objective, start, initial_step(start), options, evals);
  // Restart from the optimum until a fresh simplex no longer improves it.
  for (int restart = 0; restart < 8 && evals < options.max_evals_per_start; ++restart) {
    const double previous = outcome.best.f;
    outcome = nelder_mead(objective, outcome.best.z, initial_step(outcome.best.z), options, evals);
    if (outcome.converged && previous - outcome.best.f < options.chi2_spread) break;
  }
  FitResult r;
  r.params = scaling.to_params(outcome.best.z);
  r.chi2 = chi_square(r.params, data);
  r.n_evals = evals;
  r.converged = outcome.converged;
  return r;
}

}  // namespace

FitResult fit(const BinnedCurve& data, const FitOptions& options) {
  if (data.size() < 8) {
    std::ostringstream msg;
    msg << "fit needs at least 8 bins, got " << data.size();
    throw IllPosedError(msg.str());
  }
  const double lo = data.bins().front().c_center;
  const double hi = data.bins().back().c_center;
  if (hi / lo < 100.0) throw IllPosedError("fit needs bins spanning at least two decades in c");
  if (options.start_betas.empty() || options.start_gammas.empty()) {
    throw PreconditionError("fit needs at least one start");
  }

  const Scaling scaling{std::sqrt(lo * hi)};
  FitResult best;
  best.chi2 = std::numeric_limits<double>::infinity();
  std::uint64_t total_evals = 0;
  int index = 0;
  for (double beta : options.start_betas) {
    for (double gamma : options.start_gammas) {
      FitResult r = fit_from(data, scaling, initial_guess(data, beta, gamma), options);
      r.start_index = index++;
      total_evals += r.n_evals;
      // Prefer converged starts; among equals the lowest chi2, then the lowest index.
      const bool better = (r.converged && !best.converged) ||
                          (r.converged == best.converged && r.chi2 < best.chi2);
      if (better) best = r;
    }
  }
  best.n_evals = total_evals;
  return best;
}

std::vector<double> log_spaced_centers(const LogBinSpec& spec) {
  if (!(spec.c_min > 0.0) || !(spec.count >= 1) || (spec.count > 1 && !(spec.c_max > spec.c_min))) {
    throw DomainError("bin spec needs 0 < c_min < c_max and count >= 1");
  }
  std::vector<double> centers(static_cast<std::size_t>(spec.count));
  const double ratio = std::log(spec.c_max / spec.c_min);
  for (int k = 0; k < spec.count; ++k) {
    const double t = spec.count == 1 ? 0.0 : static_cast<double>(k) / (spec.count - 1);
    centers[static_cast<std::size_t>(k)] = spec.c_min * std::exp(ratio * t);
  }
  return centers;
}

BinnedCurve synthetic_curve(const ModelParams& p, std::span<const double> centers, double sigma,
                            std::uint64_t seed) {
  validate(p);
  if (!(sigma >= 0.0)) throw DomainError("noise sigma must be non-negative");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<CurveBin> bins;
  bins.reserve(centers.size());
  for (double c : centers) {
    double n = mean_occupancy(c, p);
    if (sigma > 0.0) n *= std::exp(sigma * normal(rng));
    bins.push_back({c, n, 1.0});
  }
  return BinnedCurve(std::move(bins));
}

BinnedCurve synthetic_curve(const ModelParams& p, const LogBinSpec& spec, double sigma,
                            std::uint64_t seed) {
  const auto centers = log_spaced_centers(spec);
  return synthetic_curve(p, centers, sigma, seed);
}

}  // namespace labprod
