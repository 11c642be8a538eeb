#pragma once

// Two-worker exchange Markov chain over a discrete productivity grid.
//
// Level i (1-based) has productivity c_i = i * dc. A move takes two distinct
// workers out of clusters (i, j) and places them into (k, l) with
// i + j = k + l, so head count and total output are conserved exactly in
// index units. Destinations are accepted with probability given by the
// limiter evaluated at the destination occupancies.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "labprod/model.hpp"

namespace labprod {

/// Generator behind every seeded operation: std::mt19937_64, seeded with the
/// 64-bit seed as its single state word.
using Rng = std::mt19937_64;

class ProductivityGrid {
 public:
  ProductivityGrid(int levels, double dc);

  int levels() const noexcept { return levels_; }
  double dc() const noexcept { return dc_; }
  /// Productivity of 1-based level i.
  double productivity(int level) const noexcept { return level * dc_; }

 private:
  int levels_;
  double dc_;
};

class SystemState {
 public:
  /// Validates non-negativity and caches totals. occupancy[0] is level 1.
  explicit SystemState(std::vector<std::int64_t> occupancy);

  std::span<const std::int64_t> occupancy() const noexcept { return occupancy_; }
  std::int64_t at(int level) const { return occupancy_.at(level - 1); }
  int levels() const noexcept { return static_cast<int>(occupancy_.size()); }
  std::int64_t workers() const noexcept { return workers_; }
  /// Sum of level * n_level; physical output is output_index() * dc.
  std::int64_t output_index() const noexcept { return output_index_; }

  /// Moves one worker from each source to each destination. Does not check
  /// acceptance; throws InvariantError if a source is empty.
  void apply(int from_a, int from_b, int to_a, int to_b);

  /// Recomputes totals from the occupancy vector and compares them with the
  /// cached values.
  bool totals_consistent() const noexcept;

  friend bool operator==(const SystemState&, const SystemState&) = default;

 private:
  std::vector<std::int64_t> occupancy_;
  std::int64_t workers_ = 0;
  std::int64_t output_index_ = 0;
};

/// Largest occupancy a level can reach under the limiter: the largest integer
/// strictly below g + 1, or `fallback` when unbounded.
std::int64_t occupancy_cap(double c, const Limiter& lim, std::int64_t fallback);

struct TargetTotals {
  std::int64_t workers = 0;
  std::int64_t output_index = 0;
};

/// Copies and validates an explicit occupancy (levels must match the grid,
/// every level within its cap).
SystemState init_state(const ProductivityGrid& grid, std::vector<std::int64_t> occupancy,
                       const Limiter& lim);

/// Deterministic state with the given totals: fill from level 1 up to each
/// level's cap, then lift single workers upward until the output matches.
SystemState init_state(const ProductivityGrid& grid, TargetTotals targets, const Limiter& lim);

struct Move {
  int from_a = 0;
  int from_b = 0;
  int to_a = 0;
  int to_b = 0;

  bool is_identity() const noexcept {
    return (from_a == to_a && from_b == to_b) || (from_a == to_b && from_b == to_a);
  }
  friend bool operator==(const Move&, const Move&) = default;
};

/// Number of ordered destination pairs (k, l) with k + l = s on an M-level grid.
int destination_count(int level_sum, int levels) noexcept;

/// Picks two distinct workers uniformly and a destination pair uniformly among
/// those with the same level sum.
Move propose_move(const SystemState& state, const ProductivityGrid& grid, Rng& rng);

/// Acceptance of `move` from `state`: destinations are evaluated after the
/// two movers leave their sources; a shared destination fills sequentially.
double acceptance_probability(const SystemState& state, const ProductivityGrid& grid,
                              const Move& move, const Limiter& lim);

struct SimConfig {
  std::uint64_t seed = 0;
  std::uint64_t steps = 0;
  std::uint64_t burn_in = 0;
  std::uint64_t sample_every = 1;
  Limiter limiter = Limiter::unbounded();
  ProductivityGrid grid{2, 1.0};
};

void validate(const SimConfig& config);

struct TimeAverages {
  std::uint64_t samples = 0;
  std::vector<double> sum;
  std::vector<double> sum_sq;

  explicit TimeAverages(int levels = 0)
      : sum(static_cast<std::size_t>(levels), 0.0), sum_sq(static_cast<std::size_t>(levels), 0.0) {}

  void accumulate(std::span<const std::int64_t> occupancy);
  std::vector<double> mean() const;
  std::vector<double> variance() const;
};

/// Unordered transition {i, j} -> {k, l}, stored with each pair sorted and
/// the lexicographically smaller pair first.
struct FluxSignature {
  int a_lo = 0;
  int a_hi = 0;
  int b_lo = 0;
  int b_hi = 0;

  auto operator<=>(const FluxSignature&) const = default;
};

struct FluxCounts {
  std::uint64_t forward = 0;
  std::uint64_t reverse = 0;
};

class FluxLedger {
 public:
  /// Records an executed non-identity move.
  void record(const Move& move);

  const std::map<FluxSignature, FluxCounts>& entries() const noexcept { return entries_; }
  bool empty() const noexcept { return entries_.empty(); }

  /// Adds another ledger's counts (independent chains merge by value).
  void merge(const FluxLedger& other);

 private:
  std::map<FluxSignature, FluxCounts> entries_;
};

struct FluxBalanceRow {
  FluxSignature signature;
  std::uint64_t forward = 0;
  std::uint64_t reverse = 0;
  double z = 0.0;
};

struct FluxBalanceReport {
  std::vector<FluxBalanceRow> rows;
  /// Fraction of reported rows with |z| > 3; zero when there are no rows.
  double fraction_beyond_3sigma = 0.0;
  double max_abs_z = 0.0;
};

FluxBalanceReport flux_balance_report(const FluxLedger& ledger, std::uint64_t min_count = 100);

struct RunResult {
  SystemState final_state;
  TimeAverages averages;
  FluxLedger ledger;
  std::uint64_t proposals = 0;
  std::uint64_t accepted = 0;

  double acceptance_rate() const noexcept {
    return proposals == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(proposals);
  }
};

/// Diagnostic veto applied after a move is accepted; returning false rejects
/// it. Used to build non-reversible or frozen variants of the chain.
using MoveVeto = std::function<bool(const Move&)>;

RunResult run(const SimConfig& config, SystemState state, const MoveVeto& veto = {});

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  double slope_stderr = 0.0;
  int points = 0;
};

/// Regresses ln(n / L(c, n)) on c over levels where both are positive.
/// Slope estimates -beta; intercept estimates beta * mu.
LineFit g_linearity_check(std::span<const double> mean_occupancy, const Limiter& lim,
                          const ProductivityGrid& grid);

/// Grand-canonical (beta, beta*mu) that reproduce the conserved totals in
/// expectation: sum_i nbar_i = N and sum_i i nbar_i = output_index.
struct ImpliedTemperature {
  double beta = 0.0;
  double beta_mu = 0.0;
};

ImpliedTemperature implied_temperature(const ProductivityGrid& grid, const Limiter& lim,
                                       TargetTotals totals);

}  // namespace labprod
