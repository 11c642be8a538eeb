#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <queue>

#include "labprod/errors.hpp"
#include "labprod/simulator.hpp"

using namespace labprod;

namespace {

SimConfig make_config(int levels, std::uint64_t seed, std::uint64_t steps, Limiter lim) {
  SimConfig c;
  c.grid = ProductivityGrid(levels, 1.0);
  c.seed = seed;
  c.steps = steps;
  c.burn_in = 0;
  c.sample_every = 1;
  c.limiter = lim;
  return c;
}

bool is_forward(const Move& m) {
  const auto src = std::minmax(m.from_a, m.from_b);
  const auto dst = std::minmax(m.to_a, m.to_b);
  return src < dst;
}

}  // namespace

TEST_CASE("grid and state construction") {
  CHECK_THROWS_AS(ProductivityGrid(1, 1.0), DomainError);
  CHECK_THROWS_AS(ProductivityGrid(5, 0.0), DomainError);
  CHECK(ProductivityGrid(5, 2.5).productivity(4) == 10.0);
  CHECK_THROWS_AS(SystemState({1, -1, 0}), DomainError);
  SystemState empty_source({1, 0, 1});
  CHECK_THROWS_AS(empty_source.apply(2, 3, 1, 4), InvariantError);

  const ProductivityGrid grid(3, 1.0);
  const auto s = init_state(grid, std::vector<std::int64_t>{2, 0, 1}, Limiter::unbounded());
  CHECK(s.workers() == 3);
  CHECK(s.output_index() == 5);

  const auto built = init_state(grid, TargetTotals{3, 5}, Limiter::unbounded());
  CHECK(built.workers() == 3);
  CHECK(built.output_index() == 5);
  CHECK(built == SystemState({2, 0, 1}));

  CHECK_THROWS_AS(init_state(grid, TargetTotals{1, 4}, Limiter::unbounded()), FeasibilityError);
  CHECK_THROWS_AS(init_state(grid, TargetTotals{3, 2}, Limiter::unbounded()), FeasibilityError);
  CHECK_THROWS_AS(init_state(grid, std::vector<std::int64_t>{1, 1}, Limiter::unbounded()),
                  FeasibilityError);

  const auto capped = Limiter::linear_ramp(CapacityLaw(2.0, 0.0));
  CHECK_THROWS_AS(init_state(grid, std::vector<std::int64_t>{3, 0, 0}, capped), FeasibilityError);
  CHECK_THROWS_AS(init_state(grid, TargetTotals{10, 20}, capped), FeasibilityError);
}

TEST_CASE("greedy construction hits arbitrary feasible totals") {
  const ProductivityGrid grid(20, 1.0);
  const auto lim = Limiter::linear_ramp(CapacityLaw(400.0, 0.5));
  for (std::int64_t y : {9000, 12345, 17000, 22000}) {
    const auto s = init_state(grid, TargetTotals{2000, y}, lim);
    CHECK(s.workers() == 2000);
    CHECK(s.output_index() == y);
    for (int i = 1; i <= 20; ++i) CHECK(s.at(i) <= occupancy_cap(i, lim, 2000));
  }
}

TEST_CASE("occupancy cap") {
  CHECK(occupancy_cap(1.0, Limiter::linear_ramp(CapacityLaw(10.0, 0.0)), 1000) == 10);
  CHECK(occupancy_cap(1.0, Limiter::linear_ramp(CapacityLaw(1.5, 0.0)), 1000) == 2);
  CHECK(occupancy_cap(1.0, Limiter::linear_ramp(CapacityLaw(10.0, 0.0)), 4) == 4);
  CHECK(occupancy_cap(1.0, Limiter::unbounded(), 77) == 77);
}

TEST_CASE("destination enumeration") {
  CHECK(destination_count(6, 6) == 5);
  CHECK(destination_count(2, 3) == 1);
  CHECK(destination_count(12, 6) == 1);
  CHECK(destination_count(9, 6) == 4);

  const ProductivityGrid grid(3, 1.0);
  const SystemState s({2, 0, 0});
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const auto m = propose_move(s, grid, rng);
    CHECK(m == Move{1, 1, 1, 1});
    CHECK(m.is_identity());
  }
}

TEST_CASE("proposals are uniform over destinations and proportional to occupancy") {
  const ProductivityGrid grid(6, 1.0);
  const SystemState s({3, 1, 4, 1, 5, 2});
  Rng rng(2024);
  const int trials = 1'000'000;
  std::map<int, std::map<int, int>> by_sum;
  std::vector<int> first(7, 0);
  for (int t = 0; t < trials; ++t) {
    const auto m = propose_move(s, grid, rng);
    REQUIRE(m.from_a + m.from_b == m.to_a + m.to_b);
    REQUIRE(s.at(m.from_a) > 0);
    ++by_sum[m.to_a + m.to_b][m.to_a];
    ++first[m.from_a];
  }
  for (const auto& [sum, hits] : by_sum) {
    const int count = destination_count(sum, 6);
    REQUIRE(static_cast<int>(hits.size()) == count);
    const int total = std::accumulate(hits.begin(), hits.end(), 0,
                                      [](int a, const auto& kv) { return a + kv.second; });
    const double p = 1.0 / count;
    for (const auto& [k, n] : hits) {
      const double sd = std::sqrt(total * p * (1 - p));
      CHECK(std::fabs(n - total * p) <= 4 * sd + 1e-12);
    }
  }
  for (int i = 1; i <= 6; ++i) {
    const double p = static_cast<double>(s.at(i)) / s.workers();
    CHECK(std::fabs(first[i] - trials * p) <= 4 * std::sqrt(trials * p * (1 - p)));
  }
}

TEST_CASE("acceptance probability") {
  const ProductivityGrid grid(6, 1.0);
  const auto lim = Limiter::linear_ramp(CapacityLaw(10.0, 0.0));
  SUBCASE("shared destination fills sequentially") {
    const SystemState s({1, 0, 8, 0, 1, 0});
    CHECK(acceptance_probability(s, grid, Move{1, 5, 3, 3}, lim) == doctest::Approx(0.02));
  }
  SUBCASE("destination at capacity") {
    const SystemState s({1, 10, 0, 0, 1, 0});
    CHECK(acceptance_probability(s, grid, Move{1, 5, 2, 4}, lim) == 0.0);
  }
  SUBCASE("empty destinations") {
    const SystemState s({1, 0, 0, 1, 0, 0});
    CHECK(acceptance_probability(s, grid, Move{1, 4, 2, 3}, lim) == 1.0);
  }
  SUBCASE("occupancies are taken after the movers leave") {
    const SystemState s({0, 10, 0, 10, 0, 0});
    CHECK(acceptance_probability(s, grid, Move{2, 4, 2, 4}, lim) == doctest::Approx(0.01));
    CHECK(acceptance_probability(s, grid, Move{2, 4, 3, 3}, lim) == doctest::Approx(0.9));
  }
  SUBCASE("unbounded limiter always accepts") {
    const SystemState s({100, 0, 0, 0, 0, 100});
    CHECK(acceptance_probability(s, grid, Move{1, 6, 3, 4}, Limiter::unbounded()) == 1.0);
  }
}

TEST_CASE("config validation") {
  auto c = make_config(5, 1, 10, Limiter::unbounded());
  c.sample_every = 0;
  CHECK_THROWS_AS(validate(c), DomainError);
  c.sample_every = 1;
  c.burn_in = 11;
  CHECK_THROWS_AS(validate(c), DomainError);
}

TEST_CASE("zero steps leave the state untouched") {
  const auto c = make_config(5, 9, 0, Limiter::unbounded());
  const SystemState s({3, 2, 1, 0, 4});
  const auto r = run(c, s);
  CHECK(r.final_state == s);
  CHECK(r.proposals == 0);
  CHECK(r.averages.samples == 0);
  CHECK(flux_balance_report(r.ledger).rows.empty());
}

TEST_CASE("frozen system") {
  const auto c = make_config(10, 5, 200'000, Limiter::unbounded());
  const auto s = init_state(c.grid, TargetTotals{100, 550}, c.limiter);
  const auto r = run(c, s, [](const Move& m) { return m.is_identity(); });
  CHECK(r.final_state == s);
  CHECK(r.ledger.empty());
}

TEST_CASE("conservation, caps and determinism") {
  const auto lim = Limiter::linear_ramp(CapacityLaw(60.0, 0.7));
  const auto c = make_config(15, 77, 300'000, lim);
  const auto s = init_state(c.grid, TargetTotals{200, 1100}, lim);
  const auto a = run(c, s);
  CHECK(a.final_state.workers() == 200);
  CHECK(a.final_state.output_index() == 1100);
  CHECK(a.final_state.totals_consistent());
  for (int i = 1; i <= 15; ++i) {
    CHECK(static_cast<double>(a.final_state.at(i)) < lim.capacity(i) + 1.0);
  }
  CHECK(a.accepted > 0);
  CHECK(a.accepted <= a.proposals);

  const auto b = run(c, s);
  CHECK(a.final_state == b.final_state);
  CHECK(a.averages.sum == b.averages.sum);
  CHECK(a.accepted == b.accepted);

  auto other = c;
  other.seed = 78;
  CHECK_FALSE(run(other, s).final_state == a.final_state);
}

TEST_CASE("sampling schedule") {
  auto c = make_config(5, 1, 1000, Limiter::unbounded());
  c.burn_in = 100;
  c.sample_every = 10;
  const auto r = run(c, SystemState({3, 3, 3, 3, 3}));
  CHECK(r.averages.samples == 90);
  CHECK(r.proposals == 1000);
}

TEST_CASE("exact stationary law of a small chain") {
  // 6 levels, capacities 6/i, 5 workers, output index 13.
  const int levels = 6;
  const auto lim = Limiter::linear_ramp(CapacityLaw(6.0, 1.0));
  auto g = [](int level) { return 6.0 / level; };
  auto ramp = [&](int level, std::int64_t n) { return std::max(0.0, (g(level) - n) / g(level)); };

  using Occ = std::vector<std::int64_t>;
  const Occ start{2, 1, 0, 1, 1, 0};
  std::map<Occ, int> index;
  std::vector<Occ> states;
  std::vector<std::map<int, double>> rows;
  std::queue<Occ> todo;
  index[start] = 0;
  states.push_back(start);
  todo.push(start);
  while (!todo.empty()) {
    const Occ n = todo.front();
    todo.pop();
    std::map<Occ, double> out;
    const double pairs = 5.0 * 4.0;
    for (int a = 1; a <= levels; ++a) {
      for (int b = 1; b <= levels; ++b) {
        const double p_src = n[a - 1] * (n[b - 1] - (a == b ? 1.0 : 0.0)) / pairs;
        if (p_src <= 0.0) continue;
        const int s = a + b;
        const int lo = std::max(1, s - levels);
        const int hi = std::min(levels, s - 1);
        for (int k = lo; k <= hi; ++k) {
          const int l = s - k;
          Occ m = n;
          --m[a - 1];
          --m[b - 1];
          const double acc = k == l ? ramp(k, m[k - 1]) * ramp(k, m[k - 1] + 1)
                                    : ramp(k, m[k - 1]) * ramp(l, m[l - 1]);
          const double p = p_src / (hi - lo + 1);
          ++m[k - 1];
          ++m[l - 1];
          out[m] += p * acc;
          out[n] += p * (1.0 - acc);
        }
      }
    }
    std::map<int, double> row;
    for (const auto& [m, p] : out) {
      if (p <= 0.0) continue;
      if (!index.count(m)) {
        index[m] = static_cast<int>(states.size());
        states.push_back(m);
        todo.push(m);
      }
      row[index[m]] += p;
    }
    rows.resize(states.size());
    rows[index[n]] = row;
  }
  rows.resize(states.size());
  REQUIRE(states.size() == 11);

  std::vector<double> pi(states.size(), 1.0 / states.size());
  for (int it = 0; it < 20000; ++it) {
    std::vector<double> next(states.size(), 0.0);
    for (std::size_t i = 0; i < states.size(); ++i) {
      for (const auto& [j, p] : rows[i]) next[j] += pi[i] * p;
    }
    pi = next;
  }

  // Product form prod_i C(g_i, n_i) g_i^-n_i (generalized binomial)
  std::vector<double> product(states.size(), 1.0);
  for (std::size_t s = 0; s < states.size(); ++s) {
    for (int i = 1; i <= levels; ++i) {
      for (std::int64_t m = 0; m < states[s][i - 1]; ++m) product[s] *= (g(i) - m) / ((m + 1) * g(i));
    }
  }
  const double z = std::accumulate(product.begin(), product.end(), 0.0);
  for (std::size_t s = 0; s < states.size(); ++s) CHECK(pi[s] == doctest::Approx(product[s] / z).epsilon(1e-9));

  std::vector<double> expected(levels, 0.0);
  for (std::size_t s = 0; s < states.size(); ++s) {
    for (int i = 0; i < levels; ++i) expected[i] += pi[s] * states[s][i];
  }

  auto c = make_config(levels, 31, 4'000'000, lim);
  c.burn_in = 1000;
  const auto r = run(c, SystemState(start));
  const auto mean = r.averages.mean();
  for (int i = 0; i < levels; ++i) CHECK(mean[i] == doctest::Approx(expected[i]).epsilon(0.01).scale(1));
  for (const auto& row : flux_balance_report(r.ledger).rows) CHECK(std::fabs(row.z) < 5.0);
}

TEST_CASE("flux ledger and report") {
  FluxLedger ledger;
  for (int i = 0; i < 150; ++i) ledger.record(Move{3, 1, 2, 2});
  for (int i = 0; i < 50; ++i) ledger.record(Move{2, 2, 1, 3});
  ledger.record(Move{1, 2, 2, 1});
  for (int i = 0; i < 30; ++i) ledger.record(Move{1, 4, 2, 3});
  REQUIRE(ledger.entries().size() == 2);
  const auto& counts = ledger.entries().at(FluxSignature{1, 3, 2, 2});
  CHECK(counts.forward == 150);
  CHECK(counts.reverse == 50);

  const auto report = flux_balance_report(ledger);
  REQUIRE(report.rows.size() == 1);
  CHECK(report.rows[0].z == doctest::Approx(100.0 / std::sqrt(200.0)));
  CHECK(report.fraction_beyond_3sigma == 1.0);
  CHECK(flux_balance_report(ledger, 10).rows.size() == 2);

  FluxLedger other;
  other.record(Move{2, 2, 3, 1});
  ledger.merge(other);
  CHECK(ledger.entries().at(FluxSignature{1, 3, 2, 2}).reverse == 51);
}

TEST_CASE("non-reversible variant breaks flux balance") {
  const auto lim = Limiter::unbounded();
  auto c = make_config(10, 8, 100'000, lim);
  const auto s = init_state(c.grid, TargetTotals{200, 1000}, lim);
  // {5,5} -> {4,6} is never allowed; everything else is.
  auto one_way = [](const Move& m) {
    return !(m.from_a == 5 && m.from_b == 5 && std::min(m.to_a, m.to_b) == 4);
  };
  const FluxSignature sig{4, 6, 5, 5};
  auto z_of = [&](const FluxBalanceReport& r) {
    for (const auto& row : r.rows) {
      if (row.signature == sig) return row.z;
    }
    return 0.0;
  };
  const auto short_run = flux_balance_report(run(c, s, one_way).ledger, 1);
  c.steps = 1'000'000;
  const auto long_run = flux_balance_report(run(c, s, one_way).ledger, 1);
  CHECK(z_of(short_run) > 3.0);
  CHECK(z_of(long_run) > 2.5 * z_of(short_run));
  CHECK(long_run.fraction_beyond_3sigma > 0.0);
}

TEST_CASE("G-linearity on exact data") {
  const ProductivityGrid grid(20, 1.0);
  const auto lim = Limiter::linear_ramp(CapacityLaw(50.0, 0.5));
  const ModelParams p{-1e-2, 5.0, 50.0, 0.5};
  std::vector<double> mean;
  for (int i = 1; i <= 20; ++i) mean.push_back(mean_occupancy(grid.productivity(i), p));
  const auto line = g_linearity_check(mean, lim, grid);
  CHECK(line.slope == doctest::Approx(1e-2).epsilon(1e-10));
  CHECK(line.intercept == doctest::Approx(-5e-2).epsilon(1e-10));
  CHECK(std::fabs(1.0 - line.r_squared) < 1e-10);
  CHECK(line.points == 20);

  std::vector<double> boltz;
  for (int i = 1; i <= 20; ++i) boltz.push_back(boltzmann_occupancy(i, -0.2, 3.0));
  const auto flat = g_linearity_check(boltz, Limiter::unbounded(), grid);
  CHECK(flat.slope == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(flat.intercept == doctest::Approx(-0.6).epsilon(1e-12));

  CHECK_THROWS_AS(g_linearity_check(std::vector<double>(20, 0.0), lim, grid), InsufficientDataError);
}

TEST_CASE("implied temperature reproduces the totals") {
  const ProductivityGrid grid(20, 1.0);
  for (bool bounded : {false, true}) {
    const auto lim = bounded ? Limiter::linear_ramp(CapacityLaw(400.0, 0.5)) : Limiter::unbounded();
    const TargetTotals totals{2000, bounded ? 20000 : 26000};
    const auto t = implied_temperature(grid, lim, totals);
    double n = 0.0, y = 0.0;
    for (int i = 1; i <= 20; ++i) {
      const double x = t.beta * grid.productivity(i) - t.beta_mu;
      const double occ = bounded ? lim.capacity(i) / (lim.capacity(i) * std::exp(x) + 1.0) : std::exp(-x);
      n += occ;
      y += i * occ;
    }
    CHECK(n == doctest::Approx(2000.0).epsilon(1e-8));
    CHECK(y == doctest::Approx(static_cast<double>(totals.output_index)).epsilon(1e-8));
    CHECK(t.beta < 0.0);
  }
}
