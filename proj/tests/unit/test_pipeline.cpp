#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "labprod/errors.hpp"
#include "labprod/io.hpp"
#include "labprod/pipeline.hpp"

using namespace labprod;

namespace {

FirmRecord firm(std::string id, double y, std::int64_t n, std::string sector = "manufacturing") {
  FirmRecord r;
  r.firm_id = std::move(id);
  r.year = 2008;
  r.sector = std::move(sector);
  r.net_profits = 0.0;
  r.labor_costs = y;
  r.financing_costs = 0.0;
  r.rental_expenses = 0.0;
  r.taxes = 0.0;
  r.depreciation = 0.0;
  r.workers = n;
  return r;
}

CleanRecord clean_record(double c, std::int64_t n) {
  return {"x", 2008, "s", c * static_cast<double>(n), n, c};
}

double total_mass(const std::vector<DensityBin>& bins, const LogBinning& b) {
  double s = 0.0;
  for (const auto& d : bins) s += d.density * b.width_log();
  return s;
}

}  // namespace

TEST_CASE("value added") {
  FirmRecord r = firm("a", 0.0, 1);
  r.net_profits = 10.0;
  r.labor_costs = 20.0;
  r.financing_costs = 30.0;
  r.rental_expenses = 40.0;
  r.taxes = 50.0;
  r.depreciation = 60.0;
  CHECK(*value_added(r) == 210.0);
  r.net_profits = -50.0;
  r.labor_costs = 100.0;
  r.financing_costs = r.rental_expenses = r.taxes = r.depreciation = 10.0;
  CHECK(*value_added(r) == 90.0);
  r.labor_costs.reset();
  CHECK_FALSE(value_added(r).has_value());
}

TEST_CASE("cleaning") {
  std::vector<FirmRecord> in{firm("a", 210.0, 3), firm("b", 100.0, 1, "finance and insurance"),
                             firm("c", -5.0, 2), firm("d", 50.0, 1)};
  in[3].workers.reset();
  FirmRecord gap = firm("e", 10.0, 1);
  gap.taxes.reset();
  in.push_back(gap);

  const auto r = clean(in);
  REQUIRE(r.records.size() == 1);
  CHECK(r.records[0].productivity == 70.0);
  CHECK(r.rejected.at(Rejection::excluded_sector) == 1);
  CHECK(r.rejected.at(Rejection::nonpositive_value_added) == 1);
  CHECK(r.rejected.at(Rejection::missing_workers) == 1);
  CHECK(r.rejected.at(Rejection::missing_value_added) == 1);
  CHECK(r.rejected_total() + r.records.size() == in.size());

  const std::vector<std::string> none;
  CHECK(clean(in, none).records.size() == 2);
  CHECK(std::string(to_string(Rejection::missing_workers)) == "missing_workers");
}

TEST_CASE("cleaning is idempotent") {
  const auto pop = synthetic_firms({-1.25e-4, -2.32e4, 5.84e7, 1.18}, 500, 1e3, 1e6, 4);
  const auto once = clean(pop);
  const auto twice = clean(std::span<const CleanRecord>(once.records));
  REQUIRE(twice.records.size() == once.records.size());
  CHECK(twice.rejected_total() == 0);
  for (std::size_t i = 0; i < once.records.size(); ++i) {
    CHECK(twice.records[i].firm_id == once.records[i].firm_id);
    CHECK(twice.records[i].productivity == once.records[i].productivity);
  }
}

TEST_CASE("log binning") {
  const LogBinning b;
  CHECK(b.bin_count() == 100);
  CHECK(b.bin_of(100.0) == 0);
  CHECK(b.bin_of(1e7) == 99);
  CHECK_FALSE(b.bin_of(99.9).has_value());
  CHECK_FALSE(b.bin_of(1.0001e7).has_value());
  for (int k = 0; k < b.bin_count(); ++k) CHECK(b.bin_of(b.edge(k)) == k);
  CHECK_THROWS_AS(LogBinning(10.0, 5.0, 1), DomainError);
}

TEST_CASE("firm density") {
  const LogBinning b(100.0, 1e4, 1);
  const std::vector<CleanRecord> two{clean_record(100.0, 1), clean_record(1000.0, 1)};
  const auto d = firm_pdf(two, b);
  REQUIRE(d.size() == 2);
  CHECK(d[0].density == doctest::Approx(0.5 / std::log(10.0)).epsilon(1e-15));
  CHECK(d[1].density == doctest::Approx(0.5 / std::log(10.0)).epsilon(1e-15));

  const auto single = firm_pdf(std::vector<CleanRecord>{clean_record(300.0, 4)}, b);
  CHECK(single[0].density == doctest::Approx(1.0 / std::log(10.0)).epsilon(1e-15));
  CHECK(single[1].density == 0.0);

  CHECK_THROWS_AS(firm_pdf(std::vector<CleanRecord>{clean_record(1e6, 1)}, b), DataError);
}

TEST_CASE("worker density") {
  const LogBinning b(100.0, 1e4, 1);
  const std::vector<CleanRecord> two{clean_record(100.0, 1), clean_record(1000.0, 9)};
  const auto d = worker_pdf(two, b);
  CHECK(d[0].density * b.width_log() == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(d[1].density * b.width_log() == doctest::Approx(0.9).epsilon(1e-15));

  const std::vector<CleanRecord> ones{clean_record(150.0, 1), clean_record(170.0, 1),
                                      clean_record(2000.0, 1)};
  const auto f = firm_pdf(ones, b);
  const auto w = worker_pdf(ones, b);
  for (std::size_t i = 0; i < f.size(); ++i) CHECK(f[i].density == w[i].density);
}

TEST_CASE("densities normalize and relate through the curve") {
  const auto pop = clean(synthetic_firms({-1.25e-4, -2.32e4, 5.84e7, 1.18}, 3000, 1e3, 1e6, 9));
  const LogBinning b;
  const auto f = firm_pdf(pop.records, b);
  const auto w = worker_pdf(pop.records, b);
  CHECK(std::fabs(total_mass(f, b) - 1.0) < 1e-12);
  CHECK(std::fabs(total_mass(w, b) - 1.0) < 1e-12);

  double workers = 0.0;
  for (const auto& r : pop.records) workers += static_cast<double>(r.workers);
  const double global_mean = workers / static_cast<double>(pop.records.size());
  const auto curve = mean_workers_curve(pop.records, b);
  for (const auto& bin : curve.bins()) {
    const int k = *b.bin_of(bin.c_center);
    const double firm_mass = f[k].density * b.width_log();
    const double worker_mass = w[k].density * b.width_log();
    CHECK(worker_mass == doctest::Approx(firm_mass * bin.n_mean / global_mean).epsilon(1e-12));
  }
}

TEST_CASE("worker density peaks right of the firm density") {
  const LogBinning b(100.0, 1e5, 2);
  const int per_bin[] = {1, 3, 5, 8, 10, 8, 5, 3, 1};
  std::vector<CleanRecord> recs;
  for (int k = 0; k < 9; ++k) {
    const double c = std::sqrt(b.edge(k) * b.edge(k + 1));
    for (int i = 0; i < per_bin[k]; ++i) recs.push_back(clean_record(c, std::int64_t{1} << k));
  }
  auto peak = [](const std::vector<DensityBin>& d) {
    return std::max_element(d.begin(), d.end(),
                            [](const auto& x, const auto& y) { return x.density < y.density; }) -
           d.begin();
  };
  CHECK(peak(worker_pdf(recs, b)) > peak(firm_pdf(recs, b)));
}

TEST_CASE("mean workers curve") {
  const LogBinning b(100.0, 1e4, 1);
  const std::vector<CleanRecord> recs{clean_record(200.0, 100), clean_record(300.0, 300),
                                      clean_record(5000.0, 7)};
  const auto curve = mean_workers_curve(recs, b);
  REQUIRE(curve.size() == 2);
  CHECK(curve.bins()[0].n_mean == 200.0);
  CHECK(curve.bins()[0].weight == 2.0);
  CHECK(curve.bins()[0].c_center == doctest::Approx(std::sqrt(100.0 * 1000.0)));
  CHECK(curve.bins()[1].n_mean == 7.0);

  auto pop = clean(synthetic_firms({-1.25e-4, -2.32e4, 5.84e7, 1.18}, 2000, 1e3, 1e6, 2)).records;
  const auto before = mean_workers_curve(pop, LogBinning());
  std::mt19937_64 rng(1);
  std::shuffle(pop.begin(), pop.end(), rng);
  const auto after = mean_workers_curve(pop, LogBinning());
  REQUIRE(before.size() == after.size());
  for (std::size_t i = 0; i < before.size(); ++i) {
    CHECK(before.bins()[i].n_mean == after.bins()[i].n_mean);
    CHECK(before.bins()[i].weight == after.bins()[i].weight);
  }
}

TEST_CASE("synthetic firms") {
  const auto pop = synthetic_firms({-1.25e-4, -2.32e4, 5.84e7, 1.18}, 1000, 1e3, 1e6, 5);
  REQUIRE(pop.size() == 1000);
  for (const auto& r : pop) {
    REQUIRE(*r.workers >= 1);
    const double c = *value_added(r) / static_cast<double>(*r.workers);
    REQUIRE(c >= 1e3 * (1 - 1e-12));
    REQUIRE(c <= 1e6 * (1 + 1e-12));
  }
  const auto again = synthetic_firms({-1.25e-4, -2.32e4, 5.84e7, 1.18}, 1000, 1e3, 1e6, 5);
  CHECK(*again[500].labor_costs == *pop[500].labor_costs);
}

TEST_CASE("record CSV parsing") {
  std::istringstream in(
      "firm_id,year,sector,net_profits,labor_costs,financing_costs,rental_expenses,taxes,depreciation,workers\r\n"
      "A1,2008,\"wholesale, general\",1,2,3,4,5,6,2\r\n"
      "\r\n"
      "A2,2008,\"say \"\"hi\"\"\",1,,3,4,5,6,\n");
  const auto recs = read_firm_records(in, unit_scale("yen"));
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].sector == "wholesale, general");
  CHECK(*recs[0].labor_costs == doctest::Approx(2e-3));
  CHECK(*recs[0].workers == 2);
  CHECK(recs[1].sector == "say \"hi\"");
  CHECK_FALSE(recs[1].labor_costs.has_value());
  CHECK_FALSE(recs[1].workers.has_value());

  std::ostringstream out;
  write_firm_records(out, recs);
  std::istringstream back(out.str());
  const auto again = read_firm_records(back, 1.0);
  CHECK(again[0].sector == recs[0].sector);
  CHECK(*again[0].labor_costs == *recs[0].labor_costs);

  std::istringstream zero(
      "firm_id,year,sector,net_profits,labor_costs,financing_costs,rental_expenses,taxes,depreciation,workers\n"
      "A,2008,s,1,1,1,1,1,1,0\n");
  CHECK_THROWS_AS(read_firm_records(zero), DataError);
  std::istringstream missing("firm_id,year\nA,2008\n");
  CHECK_THROWS_AS(read_firm_records(missing), DataError);
  std::istringstream junk(
      "firm_id,year,sector,net_profits,labor_costs,financing_costs,rental_expenses,taxes,depreciation,workers\n"
      "A,2008,s,abc,1,1,1,1,1,1\n");
  CHECK_THROWS_AS(read_firm_records(junk), DataError);
  CHECK_THROWS_AS(unit_scale("dollars"), DataError);
  CHECK(unit_scale("million_yen") == 1e3);
}

TEST_CASE("number formatting round-trips") {
  for (double v : {0.1, 1.0 / 3.0, 219.6181302228666, -1.25e-4, 6.02214076e23}) {
    CHECK(std::stod(format_double(v)) == v);
  }
  CHECK(format_double(2.0) == "2");
  CHECK(csv_field("a,b") == "\"a,b\"");
  CHECK(csv_field("plain") == "plain");
}

TEST_CASE("curve CSV") {
  std::istringstream in("c_center,n_mean\n10,1\n20,2.5\n");
  const auto c = read_curve_csv(in);
  REQUIRE(c.size() == 2);
  CHECK(c.bins()[1].n_mean == 2.5);
  CHECK(c.bins()[1].weight == 1.0);
  std::ostringstream out;
  write_curve_csv(out, c);
  CHECK(out.str() == "c_center,n_mean,weight\n10,1,1\n20,2.5,1\n");
  std::istringstream bad("c_center,n_mean\n10,-1\n");
  CHECK_THROWS_AS(read_curve_csv(bad), DataError);
}
