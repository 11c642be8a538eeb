#include "labprod/verify.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <sstream>

#include "labprod/errors.hpp"
#include "labprod/fitting.hpp"
#include "labprod/model.hpp"

namespace labprod {

namespace {

// Reference parameter sets (beta, mu, A, gamma) with their published peak c_p.
struct TableRow {
  const char* name;
  ModelParams params;
  double peak;
};

const TableRow kTableRows[] = {
    {"all", {-1.25e-4, -2.32e4, 5.84e7, 1.18}, 3.14e4},
    {"manufacturing", {-1.78e-4, -1.63e4, 8.51e7, 1.17}, 2.70e4},
    {"non-manufacturing", {-0.86e-4, -3.47e4, 1.52e7, 1.08}, 3.74e4},
};

double rel_err(double got, double want) { return std::fabs(got - want) / std::fabs(want); }

VerifyCheck check(const char* suite, std::string name, double value, double threshold,
                  std::string detail = {}) {
  VerifyCheck c;
  c.suite = suite;
  c.name = std::move(name);
  c.value = value;
  c.threshold = threshold;
  c.passed = value <= threshold;
  c.detail = std::move(detail);
  return c;
}

void closed_form(std::vector<VerifyCheck>& out) {
  const char* suite = "closed-form";
  std::mt19937_64 rng(20120601);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    ModelParams p;
    p.beta = (u(rng) < 0.5 ? -1.0 : 1.0) * std::pow(10.0, -5.0 + 2.0 * u(rng));
    p.mu = (u(rng) - 0.5) * 1e5;
    p.A = std::pow(10.0, 3.0 + 6.0 * u(rng));
    p.gamma = 2.0 * u(rng);
    const double c = std::pow(10.0, 6.0 * u(rng));
    const auto lim = Limiter::linear_ramp(CapacityLaw(p.A, p.gamma));
    worst = std::max(worst, rel_err(solve_occupancy_fixed_point(c, lim, p.beta, p.mu),
                                    mean_occupancy(c, p)));
  }
  out.push_back(check(suite, "fixed_point_matches_closed_form", worst, 1e-8,
                      "1000 random points, c over 6 decades"));

  worst = 0.0;
  for (int i = 0; i <= 600; ++i) {
    const double c = std::pow(10.0, -2.0 + 6.0 * i / 600.0);
    const ModelParams p{-1e-4, 0.0, 1e9, 0.0};
    worst = std::max(worst, rel_err(mean_occupancy(c, p), boltzmann_occupancy(c, p.beta, p.mu)));
  }
  out.push_back(check(suite, "boltzmann_limit", worst, 1e-6, "A=1e9, gamma=0, c in [1e-2, 1e4]"));

  worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    ModelParams p;
    p.beta = -std::pow(10.0, -5.0 + 2.0 * u(rng));
    p.mu = (u(rng) < 0.5 ? -1.0 : 1.0) * std::pow(10.0, 3.0 + 1.5 * u(rng));
    p.A = std::pow(10.0, 5.0 + 4.0 * u(rng));
    p.gamma = 0.5 + 1.5 * u(rng);
    const double c = std::pow(10.0, 2.0 + 4.0 * u(rng));
    const double h = 1e-6 * std::fabs(p.mu);
    ModelParams up = p;
    ModelParams down = p;
    up.mu += h;
    down.mu -= h;
    const double derivative = (log_partition(c, up) - log_partition(c, down)) / (2.0 * h);
    worst = std::max(worst, rel_err(derivative / p.beta, mean_occupancy(c, p)));
  }
  out.push_back(check(suite, "partition_function_derivative", worst, 1e-6,
                      "200 random points, central difference h = 1e-6 |mu|"));

  for (const auto& row : kTableRows) {
    const double cp = peak_productivity(row.params);
    std::ostringstream detail;
    detail.precision(8);
    detail << "c_p=" << cp << " reported " << row.peak;
    out.push_back(check(suite, std::string("reference_peak_") + row.name, rel_err(cp, row.peak), 0.05,
                        detail.str()));
  }
}

void balance(std::vector<VerifyCheck>& out) {
  const char* suite = "balance";
  for (bool binding : {false, true}) {
    const auto ref = reference_chain(binding);
    const std::string tag = binding ? "binding" : "unbounded";
    const auto initial = init_state(ref.config.grid, ref.totals, ref.config.limiter);
    const auto result = run(ref.config, initial);
    const auto& s = result.final_state;

    std::int64_t n = 0;
    std::int64_t y = 0;
    for (int i = 1; i <= s.levels(); ++i) {
      n += s.at(i);
      y += i * s.at(i);
    }
    const double drift = static_cast<double>(std::llabs(n - ref.totals.workers) +
                                             std::llabs(y - ref.totals.output_index));
    out.push_back(check(suite, "conservation_" + tag, drift, 0.0));

    const auto report = flux_balance_report(result.ledger);
    std::ostringstream detail;
    detail << report.rows.size() << " signatures with >= 100 moves";
    out.push_back(check(suite, "flux_z_beyond_3_" + tag, report.fraction_beyond_3sigma, 0.01,
                        detail.str()));

    const auto line = g_linearity_check(result.averages.mean(), ref.config.limiter, ref.config.grid);
    out.push_back(check(suite, "g_linearity_r2_" + tag, 1.0 - line.r_squared, 0.01,
                        "value is 1 - R^2"));
    const auto implied = implied_temperature(ref.config.grid, ref.config.limiter, ref.totals);
    const bool sign_ok = (line.slope > 0.0) == (-implied.beta > 0.0);
    out.push_back(check(suite, "slope_sign_" + tag, sign_ok ? 0.0 : 1.0, 0.0));
  }
}

void roundtrip(std::vector<VerifyCheck>& out) {
  const char* suite = "roundtrip";
  const ModelParams truth = kTableRows[0].params;
  const LogBinSpec bins{1e3, 1e6, 50};

  auto errors = [&](const ModelParams& p) {
    return std::array<double, 4>{rel_err(p.beta, truth.beta), rel_err(p.mu, truth.mu),
                                 rel_err(p.gamma, truth.gamma),
                                 rel_err(std::log(p.A), std::log(truth.A))};
  };

  const auto exact = fit(synthetic_curve(truth, bins, 0.0, 1));
  const auto e = errors(exact.params);
  out.push_back(check(suite, "noiseless_recovery", *std::max_element(e.begin(), e.end()), 1e-3));

  int good = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto r = fit(synthetic_curve(truth, bins, 0.05, seed));
    const auto en = errors(r.params);
    if (en[0] <= 0.05 && en[1] <= 0.05 && en[2] <= 0.05 && en[3] <= 0.02) ++good;
  }
  out.push_back(check(suite, "noisy_recovery_failures", 10.0 - good, 1.0,
                      "seeds out of 10 missing 5% (beta, mu, gamma) / 2% (ln A)"));
}

}  // namespace

const std::vector<std::string>& verify_suites() {
  static const std::vector<std::string> names{"closed-form", "balance", "roundtrip", "all"};
  return names;
}

ReferenceChain reference_chain(bool binding, std::uint64_t steps) {
  ReferenceChain ref;
  ref.config.grid = ProductivityGrid(20, 1.0);
  ref.config.seed = 42;
  ref.config.steps = steps;
  ref.config.burn_in = steps / 10;
  ref.config.sample_every = 100;
  if (binding) {
    ref.config.limiter = Limiter::linear_ramp(CapacityLaw(400.0, 0.5));
    ref.totals = {2000, 20000};
  } else {
    ref.config.limiter = Limiter::unbounded();
    ref.totals = {2000, 26000};
  }
  return ref;
}

std::vector<VerifyCheck> run_verify_suite(const std::string& suite) {
  std::vector<VerifyCheck> out;
  const bool all = suite == "all";
  if (!all && std::find(verify_suites().begin(), verify_suites().end(), suite) == verify_suites().end()) {
    throw PreconditionError("unknown verify suite '" + suite + "'");
  }
  if (all || suite == "closed-form") closed_form(out);
  if (all || suite == "balance") balance(out);
  if (all || suite == "roundtrip") roundtrip(out);
  return out;
}

}  // namespace labprod
