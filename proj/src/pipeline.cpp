#include "labprod/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "labprod/errors.hpp"
#include "labprod/io.hpp"
#include "labprod/simulator.hpp"

namespace labprod {

std::optional<double> value_added(const FirmRecord& r) {
  const std::optional<double>* parts[] = {&r.net_profits,     &r.labor_costs, &r.financing_costs,
                                          &r.rental_expenses, &r.taxes,       &r.depreciation};
  double sum = 0.0;
  for (const auto* part : parts) {
    if (!part->has_value()) return std::nullopt;
    sum += **part;
  }
  return sum;
}

const char* to_string(Rejection r) noexcept {
  switch (r) {
    case Rejection::excluded_sector: return "excluded_sector";
    case Rejection::missing_value_added: return "missing_value_added";
    case Rejection::missing_workers: return "missing_workers";
    case Rejection::nonpositive_value_added: return "nonpositive_value_added";
  }
  return "unknown";
}

const std::vector<std::string>& default_excluded_sectors() {
  static const std::vector<std::string> sectors{
      "finance and insurance", "deep-sea foreign transport of freight", "holding companies"};
  return sectors;
}

std::size_t CleanResult::rejected_total() const {
  std::size_t n = 0;
  for (const auto& [reason, count] : rejected) n += count;
  return n;
}

namespace {

bool excluded(const std::string& sector, std::span<const std::string> excluded_sectors) {
  return std::find(excluded_sectors.begin(), excluded_sectors.end(), sector) != excluded_sectors.end();
}

CleanResult empty_result() {
  CleanResult r;
  for (auto reason : {Rejection::excluded_sector, Rejection::missing_value_added,
                      Rejection::missing_workers, Rejection::nonpositive_value_added}) {
    r.rejected[reason] = 0;
  }
  return r;
}

}  // namespace

CleanResult clean(std::span<const FirmRecord> records, std::span<const std::string> excluded_sectors) {
  CleanResult out = empty_result();
  out.records.reserve(records.size());
  for (const auto& r : records) {
    if (excluded(r.sector, excluded_sectors)) {
      ++out.rejected[Rejection::excluded_sector];
      continue;
    }
    const auto y = value_added(r);
    if (!y) {
      ++out.rejected[Rejection::missing_value_added];
      continue;
    }
    if (!r.workers || *r.workers < 1) {
      ++out.rejected[Rejection::missing_workers];
      continue;
    }
    if (!(*y > 0.0)) {
      ++out.rejected[Rejection::nonpositive_value_added];
      continue;
    }
    out.records.push_back({r.firm_id, r.year, r.sector, *y, *r.workers,
                           *y / static_cast<double>(*r.workers)});
  }
  return out;
}

CleanResult clean(std::span<const CleanRecord> records, std::span<const std::string> excluded_sectors) {
  CleanResult out = empty_result();
  for (const auto& r : records) {
    if (excluded(r.sector, excluded_sectors)) {
      ++out.rejected[Rejection::excluded_sector];
    } else if (r.workers < 1) {
      ++out.rejected[Rejection::missing_workers];
    } else if (!(r.value_added > 0.0)) {
      ++out.rejected[Rejection::nonpositive_value_added];
    } else {
      out.records.push_back(r);
    }
  }
  return out;
}

LogBinning::LogBinning(double c_min, double c_max, int bins_per_decade)
    : c_min_(c_min), c_max_(c_max), per_decade_(bins_per_decade) {
  if (!(c_min > 0.0) || !(c_max > c_min) || !std::isfinite(c_max)) {
    throw DomainError("log binning needs 0 < c_min < c_max");
  }
  if (bins_per_decade < 1) throw DomainError("bins_per_decade must be positive");
  count_ = std::max(1, static_cast<int>(std::ceil(bins_per_decade * std::log10(c_max / c_min) - 1e-9)));
}

double LogBinning::edge(int k) const {
  return c_min_ * std::pow(10.0, static_cast<double>(k) / per_decade_);
}

double LogBinning::width_log() const { return std::log(10.0) / per_decade_; }

std::optional<int> LogBinning::bin_of(double c) const {
  if (!(c >= c_min_) || !(c <= c_max_)) return std::nullopt;
  int k = static_cast<int>(std::floor(per_decade_ * std::log10(c / c_min_)));
  k = std::clamp(k, 0, count_ - 1);
  while (k > 0 && c < edge(k)) --k;
  while (k < count_ - 1 && c >= edge(k + 1)) ++k;
  return k;
}

namespace {

template <typename Weight>
std::vector<DensityBin> density(std::span<const CleanRecord> records, const LogBinning& binning,
                                Weight weight) {
  std::vector<double> mass(static_cast<std::size_t>(binning.bin_count()), 0.0);
  double total = 0.0;
  for (const auto& r : records) {
    const auto k = binning.bin_of(r.productivity);
    if (!k) continue;
    const double w = weight(r);
    mass[static_cast<std::size_t>(*k)] += w;
    total += w;
  }
  if (!(total > 0.0)) throw DataError("no records inside the binning range");
  std::vector<DensityBin> out(mass.size());
  for (int k = 0; k < binning.bin_count(); ++k) {
    const auto i = static_cast<std::size_t>(k);
    out[i] = {binning.edge(k), binning.edge(k + 1), mass[i] / (total * binning.width_log())};
  }
  return out;
}

}  // namespace

std::vector<DensityBin> firm_pdf(std::span<const CleanRecord> records, const LogBinning& binning) {
  return density(records, binning, [](const CleanRecord&) { return 1.0; });
}

std::vector<DensityBin> worker_pdf(std::span<const CleanRecord> records, const LogBinning& binning) {
  return density(records, binning,
                 [](const CleanRecord& r) { return static_cast<double>(r.workers); });
}

BinnedCurve mean_workers_curve(std::span<const CleanRecord> records, const LogBinning& binning) {
  std::vector<std::int64_t> workers(static_cast<std::size_t>(binning.bin_count()), 0);
  std::vector<std::int64_t> firms(workers.size(), 0);
  for (const auto& r : records) {
    const auto k = binning.bin_of(r.productivity);
    if (!k) continue;
    workers[static_cast<std::size_t>(*k)] += r.workers;
    ++firms[static_cast<std::size_t>(*k)];
  }
  std::vector<CurveBin> bins;
  for (int k = 0; k < binning.bin_count(); ++k) {
    const auto i = static_cast<std::size_t>(k);
    if (firms[i] == 0) continue;
    bins.push_back({std::sqrt(binning.edge(k) * binning.edge(k + 1)),
                    static_cast<double>(workers[i]) / static_cast<double>(firms[i]),
                    static_cast<double>(firms[i])});
  }
  if (bins.empty()) throw DataError("no records inside the binning range");
  return BinnedCurve(std::move(bins));
}

double unit_scale(const std::string& units) {
  if (units == "thousand_yen") return 1.0;
  if (units == "yen") return 1e-3;
  if (units == "million_yen") return 1e3;
  throw DataError("unknown input units '" + units + "' (expected yen, thousand_yen, million_yen)");
}

namespace {

const std::vector<std::string>& record_columns() {
  static const std::vector<std::string> cols{
      "firm_id", "year",  "sector",       "net_profits", "labor_costs", "financing_costs",
      "rental_expenses", "taxes", "depreciation", "workers"};
  return cols;
}

std::optional<double> parse_money(const std::string& field, double scale, std::size_t line) {
  if (field.empty()) return std::nullopt;
  const double v = parse_double(field, line);
  return v * scale;
}

}  // namespace

std::vector<FirmRecord> read_firm_records(std::istream& in, double scale) {
  const auto rows = read_csv(in);
  if (rows.empty()) throw DataError("records file is empty (header row required)");
  const auto& header = rows.front();
  const auto& cols = record_columns();
  std::vector<std::size_t> where(cols.size());
  for (std::size_t c = 0; c < cols.size(); ++c) {
    const auto it = std::find(header.begin(), header.end(), cols[c]);
    if (it == header.end()) throw DataError("records file lacks column '" + cols[c] + "'");
    where[c] = static_cast<std::size_t>(it - header.begin());
  }

  std::vector<FirmRecord> out;
  out.reserve(rows.size() - 1);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    const std::size_t line = i + 1;
    if (row.size() != header.size()) {
      std::ostringstream msg;
      msg << "line " << line << ": expected " << header.size() << " fields, got " << row.size();
      throw DataError(msg.str());
    }
    auto field = [&](std::size_t c) -> const std::string& { return row[where[c]]; };
    FirmRecord r;
    r.firm_id = field(0);
    r.year = field(1).empty() ? 0 : static_cast<int>(parse_integer(field(1), line));
    r.sector = field(2);
    r.net_profits = parse_money(field(3), scale, line);
    r.labor_costs = parse_money(field(4), scale, line);
    r.financing_costs = parse_money(field(5), scale, line);
    r.rental_expenses = parse_money(field(6), scale, line);
    r.taxes = parse_money(field(7), scale, line);
    r.depreciation = parse_money(field(8), scale, line);
    if (!field(9).empty()) {
      const auto n = parse_integer(field(9), line);
      if (n < 1) {
        std::ostringstream msg;
        msg << "line " << line << ": worker count must be at least 1";
        throw DataError(msg.str());
      }
      r.workers = n;
    }
    out.push_back(std::move(r));
  }
  return out;
}

void write_firm_records(std::ostream& out, std::span<const FirmRecord> records) {
  const auto& cols = record_columns();
  for (std::size_t c = 0; c < cols.size(); ++c) out << (c ? "," : "") << cols[c];
  out << '\n';
  auto money = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (const auto& r : records) {
    out << csv_field(r.firm_id) << ',' << r.year << ',' << csv_field(r.sector) << ','
        << money(r.net_profits) << ',' << money(r.labor_costs) << ',' << money(r.financing_costs)
        << ',' << money(r.rental_expenses) << ',' << money(r.taxes) << ','
        << money(r.depreciation) << ',' << (r.workers ? std::to_string(*r.workers) : "") << '\n';
  }
}

std::vector<FirmRecord> synthetic_firms(const ModelParams& p, std::size_t count, double c_min,
                                        double c_max, std::uint64_t seed) {
  validate(p);
  if (!(c_min > 0.0) || !(c_max > c_min)) throw DomainError("need 0 < c_min < c_max");
  Rng rng(seed);
  std::uniform_real_distribution<double> log_c(std::log(c_min), std::log(c_max));
  std::vector<FirmRecord> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double c = std::exp(log_c(rng));
    std::poisson_distribution<std::int64_t> poisson(mean_occupancy(c, p));
    std::int64_t n = 0;
    for (int tries = 0; tries < 10000 && n == 0; ++tries) n = poisson(rng);
    if (n == 0) n = 1;
    FirmRecord r;
    r.firm_id = "S" + std::to_string(i + 1);
    r.year = 2008;
    r.sector = "synthetic";
    r.net_profits = 0.0;
    r.labor_costs = c * static_cast<double>(n);
    r.financing_costs = 0.0;
    r.rental_expenses = 0.0;
    r.taxes = 0.0;
    r.depreciation = 0.0;
    r.workers = n;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace labprod
