#pragma once

// CSV reading and writing for the tool's file formats. Numbers are written in
// shortest round-trip decimal form.

#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "labprod/fitting.hpp"
#include "labprod/pipeline.hpp"
#include "labprod/simulator.hpp"

namespace labprod {

/// Shortest decimal that parses back to exactly `v`; "inf", "-inf", "nan"
/// for non-finite values.
std::string format_double(double v);

/// Quotes a field if it contains a comma, quote, or line break.
std::string csv_field(const std::string& s);

/// RFC 4180 style reader: quoted fields with doubled quotes, CRLF or LF
/// line endings, blank lines skipped.
std::vector<std::vector<std::string>> read_csv(std::istream& in);

/// Throws DataError mentioning `line` on malformed input.
double parse_double(const std::string& s, std::size_t line);
std::int64_t parse_integer(const std::string& s, std::size_t line);

/// Columns c_center, n_mean and optional weight (default 1).
BinnedCurve read_curve_csv(std::istream& in);
void write_curve_csv(std::ostream& out, const BinnedCurve& curve);

void write_density_csv(std::ostream& out, std::span<const DensityBin> bins);
void write_clean_csv(std::ostream& out, std::span<const CleanRecord> records);

/// Columns level_index, c, n_mean, n_var, g_of_c.
void write_occupancy_csv(std::ostream& out, const ProductivityGrid& grid, const Limiter& lim,
                         std::span<const double> mean, std::span<const double> var);

/// Columns a_lo, a_hi, b_lo, b_hi, forward, reverse, z.
void write_flux_csv(std::ostream& out, const FluxBalanceReport& report);

}  // namespace labprod
