#pragma once

// Firm records -> value added -> labor productivity -> log-binned densities
// and the mean-workers-by-productivity curve.

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "labprod/fitting.hpp"
#include "labprod/model.hpp"

namespace labprod {

/// One firm-year. Monetary fields are in 10^3 yen; empty optionals are
/// missing entries.
struct FirmRecord {
  std::string firm_id;
  int year = 0;
  std::string sector;
  std::optional<double> net_profits;
  std::optional<double> labor_costs;
  std::optional<double> financing_costs;
  std::optional<double> rental_expenses;
  std::optional<double> taxes;
  std::optional<double> depreciation;
  std::optional<std::int64_t> workers;
};

struct CleanRecord {
  std::string firm_id;
  int year = 0;
  std::string sector;
  double value_added = 0.0;
  std::int64_t workers = 0;
  double productivity = 0.0;
};

/// Sum of the six value-added components, or nullopt if any is missing.
std::optional<double> value_added(const FirmRecord& r);

enum class Rejection { excluded_sector, missing_value_added, missing_workers, nonpositive_value_added };

const char* to_string(Rejection r) noexcept;

const std::vector<std::string>& default_excluded_sectors();

struct CleanResult {
  std::vector<CleanRecord> records;
  std::map<Rejection, std::size_t> rejected;

  std::size_t rejected_total() const;
};

CleanResult clean(std::span<const FirmRecord> records,
                  std::span<const std::string> excluded_sectors = default_excluded_sectors());

/// Re-applies the sector and positivity filters to already-clean records.
CleanResult clean(std::span<const CleanRecord> records,
                  std::span<const std::string> excluded_sectors = default_excluded_sectors());

class LogBinning {
 public:
  LogBinning(double c_min = 1e2, double c_max = 1e7, int bins_per_decade = 20);

  double c_min() const noexcept { return c_min_; }
  double c_max() const noexcept { return c_max_; }
  int bins_per_decade() const noexcept { return per_decade_; }
  int bin_count() const noexcept { return count_; }
  /// c_min 10^(k / bins_per_decade)
  double edge(int k) const;
  double width_log() const;
  /// Bin holding c, or nullopt outside [c_min, c_max].
  std::optional<int> bin_of(double c) const;

 private:
  double c_min_;
  double c_max_;
  int per_decade_;
  int count_;
};

struct DensityBin {
  double lo = 0.0;
  double hi = 0.0;
  double density = 0.0;
};

/// Density over ln c with unit weight per firm, normalized to unit integral.
std::vector<DensityBin> firm_pdf(std::span<const CleanRecord> records, const LogBinning& binning);

/// Density over ln c weighted by each firm's worker count.
std::vector<DensityBin> worker_pdf(std::span<const CleanRecord> records, const LogBinning& binning);

/// Mean workers per firm by bin; c_center is the geometric mean of the edges.
BinnedCurve mean_workers_curve(std::span<const CleanRecord> records, const LogBinning& binning);

/// Monetary scale applied at parse time to convert input units to 10^3 yen.
double unit_scale(const std::string& units);

/// Reads the firm-record CSV (header row required; empty field = missing).
std::vector<FirmRecord> read_firm_records(std::istream& in, double scale = 1.0);

void write_firm_records(std::ostream& out, std::span<const FirmRecord> records);

/// Synthetic firm population: c log-uniform on [c_min, c_max], workers
/// Poisson around mean_occupancy(c) conditioned on being at least one.
/// Value added is carried entirely in labor_costs.
std::vector<FirmRecord> synthetic_firms(const ModelParams& p, std::size_t count, double c_min,
                                        double c_max, std::uint64_t seed);

}  // namespace labprod
