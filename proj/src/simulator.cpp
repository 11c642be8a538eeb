#include "labprod/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>

#include <boost/math/tools/roots.hpp>

#include "labprod/errors.hpp"

namespace labprod {

ProductivityGrid::ProductivityGrid(int levels, double dc) : levels_(levels), dc_(dc) {
  if (levels < 2) throw DomainError("grid needs at least two levels");
  if (!(dc > 0.0) || !std::isfinite(dc)) throw DomainError("grid spacing dc must be positive");
}

SystemState::SystemState(std::vector<std::int64_t> occupancy) : occupancy_(std::move(occupancy)) {
  for (std::size_t i = 0; i < occupancy_.size(); ++i) {
    if (occupancy_[i] < 0) throw DomainError("occupancy must be non-negative");
    workers_ += occupancy_[i];
    output_index_ += static_cast<std::int64_t>(i + 1) * occupancy_[i];
  }
}

void SystemState::apply(int from_a, int from_b, int to_a, int to_b) {
  auto& na = occupancy_.at(from_a - 1);
  if (na <= 0) throw InvariantError("move source cluster is empty");
  --na;
  auto& nb = occupancy_.at(from_b - 1);
  if (nb <= 0) {
    ++na;
    throw InvariantError("move source cluster is empty");
  }
  --nb;
  ++occupancy_.at(to_a - 1);
  ++occupancy_.at(to_b - 1);
  output_index_ += (to_a + to_b) - (from_a + from_b);
}

bool SystemState::totals_consistent() const noexcept {
  std::int64_t n = 0;
  std::int64_t y = 0;
  for (std::size_t i = 0; i < occupancy_.size(); ++i) {
    if (occupancy_[i] < 0) return false;
    n += occupancy_[i];
    y += static_cast<std::int64_t>(i + 1) * occupancy_[i];
  }
  return n == workers_ && y == output_index_;
}

std::int64_t occupancy_cap(double c, const Limiter& lim, std::int64_t fallback) {
  if (!lim.bounded()) return fallback;
  const double g = lim.capacity(c);
  // largest integer strictly below g + 1
  const double cap = std::ceil(g + 1.0) - 1.0;
  if (cap >= static_cast<double>(std::numeric_limits<std::int64_t>::max())) return fallback;
  return std::min(fallback, static_cast<std::int64_t>(cap));
}

namespace {

std::vector<std::int64_t> level_caps(const ProductivityGrid& grid, const Limiter& lim,
                                     std::int64_t fallback) {
  std::vector<std::int64_t> caps(static_cast<std::size_t>(grid.levels()));
  for (int i = 1; i <= grid.levels(); ++i) {
    caps[static_cast<std::size_t>(i - 1)] = occupancy_cap(grid.productivity(i), lim, fallback);
  }
  return caps;
}

void check_caps(const SystemState& state, const ProductivityGrid& grid, const Limiter& lim) {
  for (int i = 1; i <= grid.levels(); ++i) {
    const auto cap = occupancy_cap(grid.productivity(i), lim, state.workers());
    if (state.at(i) > cap) {
      std::ostringstream msg;
      msg << "level " << i << " holds " << state.at(i) << " workers, above its capacity limit "
          << cap;
      throw FeasibilityError(msg.str());
    }
  }
}

}  // namespace

SystemState init_state(const ProductivityGrid& grid, std::vector<std::int64_t> occupancy,
                       const Limiter& lim) {
  if (static_cast<int>(occupancy.size()) != grid.levels()) {
    throw FeasibilityError("occupancy length does not match the number of grid levels");
  }
  SystemState state(std::move(occupancy));
  check_caps(state, grid, lim);
  return state;
}

SystemState init_state(const ProductivityGrid& grid, TargetTotals targets, const Limiter& lim) {
  const int M = grid.levels();
  const auto N = targets.workers;
  const auto Y = targets.output_index;
  if (N < 1) throw FeasibilityError("target worker count must be at least 1");
  if (Y < N || Y > N * M) {
    std::ostringstream msg;
    msg << "output index " << Y << " unreachable with " << N << " workers on " << M
        << " levels (must lie in [" << N << ", " << N * M << "])";
    throw FeasibilityError(msg.str());
  }

  const auto caps = level_caps(grid, lim, N);
  std::vector<std::int64_t> n(static_cast<std::size_t>(M), 0);
  std::int64_t left = N;
  std::int64_t y = 0;
  for (int i = 1; i <= M && left > 0; ++i) {
    const auto put = std::min(left, caps[static_cast<std::size_t>(i - 1)]);
    n[static_cast<std::size_t>(i - 1)] = put;
    left -= put;
    y += put * i;
  }
  if (left > 0) throw FeasibilityError("total capacity of the grid is below the worker count");
  if (y > Y) throw FeasibilityError("output index below the minimum reachable under capacity limits");

  auto room = [&](int level) {
    const auto k = static_cast<std::size_t>(level - 1);
    return caps[k] - n[k];
  };
  while (y < Y) {
    const auto need = Y - y;
    bool moved = false;
    for (int i = M - 1; i >= 1 && !moved; --i) {
      if (n[static_cast<std::size_t>(i - 1)] == 0) continue;
      const int top = static_cast<int>(std::min<std::int64_t>(M, i + need));
      for (int j = top; j > i; --j) {
        if (room(j) <= 0) continue;
        const auto count = std::min({n[static_cast<std::size_t>(i - 1)], room(j), need / (j - i)});
        n[static_cast<std::size_t>(i - 1)] -= count;
        n[static_cast<std::size_t>(j - 1)] += count;
        y += count * (j - i);
        moved = true;
        break;
      }
    }
    if (!moved) throw FeasibilityError("output index above the maximum reachable under capacity limits");
  }
  return SystemState(std::move(n));
}

int destination_count(int level_sum, int levels) noexcept {
  const int lo = std::max(1, level_sum - levels);
  const int hi = std::min(levels, level_sum - 1);
  return hi >= lo ? hi - lo + 1 : 0;
}

namespace {

double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Shared proposal: `locate(w)` maps a 0-based worker rank to its level.
template <typename Locate>
Move propose_with(std::int64_t workers, int levels, Rng& rng, Locate locate) {
  if (workers < 2) throw PreconditionError("a move needs at least two workers");
  std::uniform_int_distribution<std::int64_t> first(0, workers - 1);
  std::uniform_int_distribution<std::int64_t> second(0, workers - 2);
  const auto u = first(rng);
  auto v = second(rng);
  if (v >= u) ++v;
  Move m;
  m.from_a = locate(u);
  m.from_b = locate(v);
  const int s = m.from_a + m.from_b;
  const int lo = std::max(1, s - levels);
  const int hi = std::min(levels, s - 1);
  std::uniform_int_distribution<int> dest(lo, hi);
  m.to_a = dest(rng);
  m.to_b = s - m.to_a;
  return m;
}

// Fenwick tree over level occupancies for O(log M) rank lookup.
class OccupancyIndex {
 public:
  explicit OccupancyIndex(std::span<const std::int64_t> occupancy)
      : tree_(occupancy.size() + 1, 0) {
    for (std::size_t i = 0; i < occupancy.size(); ++i) add(static_cast<int>(i + 1), occupancy[i]);
    top_bit_ = 1;
    while (top_bit_ * 2 <= static_cast<int>(occupancy.size())) top_bit_ *= 2;
  }

  void add(int level, std::int64_t delta) {
    for (auto i = static_cast<std::size_t>(level); i < tree_.size(); i += i & (~i + 1)) {
      tree_[i] += delta;
    }
  }

  // Smallest level whose prefix count exceeds rank.
  int locate(std::int64_t rank) const {
    std::size_t pos = 0;
    for (auto step = static_cast<std::size_t>(top_bit_); step > 0; step >>= 1) {
      const auto next = pos + step;
      if (next < tree_.size() && tree_[next] <= rank) {
        pos = next;
        rank -= tree_[next];
      }
    }
    return static_cast<int>(pos + 1);
  }

 private:
  std::vector<std::int64_t> tree_;
  int top_bit_ = 1;
};

double ramp(double g, double n) {
  if (n >= g) return 0.0;
  return (g - n) / g;
}

// Destination occupancies after both movers have left their sources.
std::pair<std::int64_t, std::int64_t> destination_occupancy(std::span<const std::int64_t> n,
                                                            const Move& m) {
  auto after = [&](int level) {
    return n[static_cast<std::size_t>(level - 1)] - (m.from_a == level) - (m.from_b == level);
  };
  return {after(m.to_a), after(m.to_b)};
}

}  // namespace

Move propose_move(const SystemState& state, const ProductivityGrid& grid, Rng& rng) {
  if (state.levels() != grid.levels()) throw PreconditionError("state does not match grid");
  const auto occ = state.occupancy();
  return propose_with(state.workers(), grid.levels(), rng, [&](std::int64_t rank) {
    for (std::size_t i = 0; i < occ.size(); ++i) {
      if (rank < occ[i]) return static_cast<int>(i + 1);
      rank -= occ[i];
    }
    throw InvariantError("worker rank beyond occupancy total");
  });
}

double acceptance_probability(const SystemState& state, const ProductivityGrid& grid,
                              const Move& move, const Limiter& lim) {
  const auto [nk, nl] = destination_occupancy(state.occupancy(), move);
  const double ck = grid.productivity(move.to_a);
  if (move.to_a == move.to_b) {
    return lim.value(ck, static_cast<double>(nk)) * lim.value(ck, static_cast<double>(nk + 1));
  }
  const double cl = grid.productivity(move.to_b);
  return lim.value(ck, static_cast<double>(nk)) * lim.value(cl, static_cast<double>(nl));
}

void validate(const SimConfig& config) {
  if (config.sample_every < 1) throw DomainError("sample_every must be at least 1");
  if (config.burn_in > config.steps) throw DomainError("burn_in must not exceed steps");
}

void TimeAverages::accumulate(std::span<const std::int64_t> occupancy) {
  ++samples;
  for (std::size_t i = 0; i < occupancy.size(); ++i) {
    const auto v = static_cast<double>(occupancy[i]);
    sum[i] += v;
    sum_sq[i] += v * v;
  }
}

std::vector<double> TimeAverages::mean() const {
  std::vector<double> out(sum.size(), 0.0);
  if (samples == 0) return out;
  for (std::size_t i = 0; i < sum.size(); ++i) out[i] = sum[i] / static_cast<double>(samples);
  return out;
}

std::vector<double> TimeAverages::variance() const {
  std::vector<double> out(sum.size(), 0.0);
  if (samples == 0) return out;
  const auto s = static_cast<double>(samples);
  for (std::size_t i = 0; i < sum.size(); ++i) {
    const double m = sum[i] / s;
    out[i] = std::max(0.0, sum_sq[i] / s - m * m);
  }
  return out;
}

void FluxLedger::record(const Move& move) {
  const std::pair src{std::min(move.from_a, move.from_b), std::max(move.from_a, move.from_b)};
  const std::pair dst{std::min(move.to_a, move.to_b), std::max(move.to_a, move.to_b)};
  if (src == dst) return;
  if (src < dst) {
    ++entries_[{src.first, src.second, dst.first, dst.second}].forward;
  } else {
    ++entries_[{dst.first, dst.second, src.first, src.second}].reverse;
  }
}

void FluxLedger::merge(const FluxLedger& other) {
  for (const auto& [sig, counts] : other.entries_) {
    auto& mine = entries_[sig];
    mine.forward += counts.forward;
    mine.reverse += counts.reverse;
  }
}

FluxBalanceReport flux_balance_report(const FluxLedger& ledger, std::uint64_t min_count) {
  FluxBalanceReport report;
  std::size_t beyond = 0;
  for (const auto& [sig, counts] : ledger.entries()) {
    const auto total = counts.forward + counts.reverse;
    if (total < min_count || total == 0) continue;
    const double z = (static_cast<double>(counts.forward) - static_cast<double>(counts.reverse)) /
                     std::sqrt(static_cast<double>(total));
    report.rows.push_back({sig, counts.forward, counts.reverse, z});
    if (std::fabs(z) > 3.0) ++beyond;
    report.max_abs_z = std::max(report.max_abs_z, std::fabs(z));
  }
  if (!report.rows.empty()) {
    report.fraction_beyond_3sigma =
        static_cast<double>(beyond) / static_cast<double>(report.rows.size());
  }
  return report;
}

RunResult run(const SimConfig& config, SystemState state, const MoveVeto& veto) {
  validate(config);
  const auto& grid = config.grid;
  const int M = grid.levels();
  if (state.levels() != M) throw PreconditionError("state does not match grid");
  check_caps(state, grid, config.limiter);
  if (config.steps > 0 && state.workers() < 2) {
    throw PreconditionError("a chain with moves needs at least two workers");
  }

  std::vector<double> g(static_cast<std::size_t>(M));
  for (int i = 1; i <= M; ++i) g[static_cast<std::size_t>(i - 1)] = config.limiter.capacity(grid.productivity(i));
  const auto caps = level_caps(grid, config.limiter, state.workers());
  const bool bounded = config.limiter.bounded();

  const auto workers0 = state.workers();
  const auto output0 = state.output_index();

  RunResult result{state, TimeAverages(M), FluxLedger{}, 0, 0};
  SystemState& s = result.final_state;
  OccupancyIndex index(s.occupancy());
  Rng rng(config.seed);

  for (std::uint64_t t = 0; t < config.steps; ++t) {
    const Move m = propose_with(s.workers(), M, rng, [&](std::int64_t r) { return index.locate(r); });

    double accept = 1.0;
    if (bounded) {
      const auto [nk, nl] = destination_occupancy(s.occupancy(), m);
      const double gk = g[static_cast<std::size_t>(m.to_a - 1)];
      if (m.to_a == m.to_b) {
        accept = ramp(gk, static_cast<double>(nk)) * ramp(gk, static_cast<double>(nk + 1));
      } else {
        accept = ramp(gk, static_cast<double>(nk)) *
                 ramp(g[static_cast<std::size_t>(m.to_b - 1)], static_cast<double>(nl));
      }
    }
    bool take = accept >= 1.0 || (accept > 0.0 && uniform01(rng) < accept);
    if (take && veto && !veto(m)) take = false;

    ++result.proposals;
    if (take) {
      ++result.accepted;
      if (!m.is_identity()) {
        s.apply(m.from_a, m.from_b, m.to_a, m.to_b);
        index.add(m.from_a, -1);
        index.add(m.from_b, -1);
        index.add(m.to_a, 1);
        index.add(m.to_b, 1);
        if (t >= config.burn_in) result.ledger.record(m);
      }
#ifndef NDEBUG
      if (s.workers() != workers0 || s.output_index() != output0 || !s.totals_consistent()) {
        throw InvariantError("conservation violated during step");
      }
      if (s.at(m.to_a) > caps[static_cast<std::size_t>(m.to_a - 1)] ||
          s.at(m.to_b) > caps[static_cast<std::size_t>(m.to_b - 1)]) {
        throw InvariantError("capacity exceeded during step");
      }
#endif
    }
    if (t >= config.burn_in && (t - config.burn_in) % config.sample_every == 0) {
      result.averages.accumulate(s.occupancy());
    }
  }

  if (s.workers() != workers0 || s.output_index() != output0 || !s.totals_consistent()) {
    throw InvariantError("conservation violated: worker count or output changed during run");
  }
  for (int i = 1; i <= M; ++i) {
    if (s.at(i) > caps[static_cast<std::size_t>(i - 1)]) {
      throw InvariantError("capacity exceeded at the end of the run");
    }
  }
  return result;
}

LineFit g_linearity_check(std::span<const double> mean_occupancy, const Limiter& lim,
                          const ProductivityGrid& grid) {
  if (static_cast<int>(mean_occupancy.size()) != grid.levels()) {
    throw PreconditionError("occupancy vector does not match grid");
  }
  std::vector<double> xs;
  std::vector<double> ys;
  for (int i = 1; i <= grid.levels(); ++i) {
    const double n = mean_occupancy[static_cast<std::size_t>(i - 1)];
    const double c = grid.productivity(i);
    if (!(n > 0.0)) continue;
    const double L = lim.value(c, n);
    if (!(L > 0.0)) continue;
    xs.push_back(c);
    ys.push_back(std::log(n / L));
  }
  const auto k = xs.size();
  if (k < 3) throw InsufficientDataError("G-linearity check needs at least three usable levels");

  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(k);
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(k);
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  LineFit fit;
  fit.points = static_cast<int>(k);
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double sse = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double r = ys[i] - (fit.intercept + fit.slope * xs[i]);
    sse += r * r;
  }
  fit.r_squared = syy > 0.0 ? 1.0 - sse / syy : 1.0;
  fit.slope_stderr = std::sqrt(sse / static_cast<double>(k - 2) / sxx);
  return fit;
}

namespace {

// Expected totals for per-index inverse temperature b and log fugacity nu.
struct Moments {
  double count = 0.0;
  double index_sum = 0.0;
};

Moments expected_moments(std::span<const double> log_g, bool bounded, double b, double nu) {
  Moments m;
  for (std::size_t k = 0; k < log_g.size(); ++k) {
    const double i = static_cast<double>(k + 1);
    const double x = b * i - nu;
    const double log_n = bounded ? log_g[k] - softplus(log_g[k] + x) : -x;
    const double n = std::exp(log_n);
    m.count += n;
    m.index_sum += i * n;
  }
  return m;
}

template <typename F>
double solve_increasing(F f, double lo, double hi, const char* what) {
  // Expand the bracket until f changes sign.
  for (int i = 0; i < 200 && f(lo) > 0.0; ++i) lo = lo * 2.0 - 1.0;
  for (int i = 0; i < 200 && f(hi) < 0.0; ++i) hi = hi * 2.0 + 1.0;
  if (f(lo) > 0.0 || f(hi) < 0.0) throw FeasibilityError(what);
  auto done = [](double a, double b) { return std::fabs(b - a) <= 1e-14 * (1.0 + std::fabs(a)); };
  std::uintmax_t iters = 400;
  const auto [a, b] = boost::math::tools::toms748_solve(f, lo, hi, done, iters);
  return 0.5 * (a + b);
}

}  // namespace

ImpliedTemperature implied_temperature(const ProductivityGrid& grid, const Limiter& lim,
                                       TargetTotals totals) {
  const int M = grid.levels();
  const auto N = static_cast<double>(totals.workers);
  const double target_mean = static_cast<double>(totals.output_index) / N;
  if (!(totals.workers >= 1) || !(target_mean > 1.0) || !(target_mean < M)) {
    throw FeasibilityError("conserved totals must put the mean level strictly inside the grid");
  }
  std::vector<double> log_g(static_cast<std::size_t>(M), 0.0);
  double total_capacity = 0.0;
  for (int i = 1; i <= M; ++i) {
    if (lim.bounded()) {
      log_g[static_cast<std::size_t>(i - 1)] = lim.law().log_capacity(grid.productivity(i));
      total_capacity += std::exp(log_g[static_cast<std::size_t>(i - 1)]);
    }
  }
  if (lim.bounded() && !(N < total_capacity)) {
    throw FeasibilityError("worker count exceeds the total capacity of the grid");
  }

  auto fugacity_for = [&](double b) {
    if (!lim.bounded()) {
      // sum_i e^{-b i + nu} = N
      double mx = -std::numeric_limits<double>::infinity();
      for (int i = 1; i <= M; ++i) mx = std::max(mx, -b * i);
      double acc = 0.0;
      for (int i = 1; i <= M; ++i) acc += std::exp(-b * i - mx);
      return std::log(N) - mx - std::log(acc);
    }
    return solve_increasing(
        [&](double nu) { return expected_moments(log_g, true, b, nu).count - N; }, -1.0, 1.0,
        "cannot match the worker count");
  };
  // Mean level falls as b rises.
  auto mean_gap = [&](double b) {
    const auto m = expected_moments(log_g, lim.bounded(), b, fugacity_for(b));
    return target_mean - m.index_sum / m.count;
  };
  const double b = solve_increasing(mean_gap, -1.0, 1.0, "cannot match the output index");
  ImpliedTemperature out;
  out.beta = b / grid.dc();
  out.beta_mu = fugacity_for(b);
  return out;
}

}  // namespace labprod
