#include "labprod/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "labprod/errors.hpp"

namespace labprod {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

std::vector<std::vector<std::string>> read_csv(std::istream& in) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  bool any = false;

  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    const bool blank = row.size() == 1 && row.front().empty() && !any;
    if (!blank) rows.push_back(std::move(row));
    row.clear();
    any = false;
  };

  char ch;
  while (in.get(ch)) {
    if (quoted) {
      if (ch == '"') {
        if (in.peek() == '"') {
          in.get(ch);
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
      continue;
    }
    switch (ch) {
      case '"':
        if (field_started || !field.empty()) throw DataError("stray quote inside unquoted CSV field");
        quoted = true;
        field_started = true;
        any = true;
        break;
      case ',':
        end_field();
        any = true;
        break;
      case '\r':
        break;
      case '\n':
        end_row();
        break;
      default:
        field += ch;
        any = true;
    }
  }
  if (quoted) throw DataError("unterminated quoted CSV field");
  if (any || !field.empty() || !row.empty()) end_row();
  return rows;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_number(const std::string& s, std::size_t line) {
  std::ostringstream msg;
  msg << "line " << line << ": cannot parse number '" << s << "'";
  throw DataError(msg.str());
}

}  // namespace

double parse_double(const std::string& raw, std::size_t line) {
  const std::string s = trim(raw);
  double v = 0.0;
  const char* first = s.data();
  if (!s.empty() && s.front() == '+') ++first;
  const auto res = std::from_chars(first, s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
    bad_number(raw, line);
  }
  return v;
}

std::int64_t parse_integer(const std::string& raw, std::size_t line) {
  const std::string s = trim(raw);
  std::int64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) bad_number(raw, line);
  return v;
}

BinnedCurve read_curve_csv(std::istream& in) {
  const auto rows = read_csv(in);
  if (rows.empty()) throw DataError("curve file is empty (header row required)");
  const auto& header = rows.front();
  auto column = [&](const std::string& name) -> std::ptrdiff_t {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : it - header.begin();
  };
  const auto c_col = column("c_center");
  const auto n_col = column("n_mean");
  const auto w_col = column("weight");
  if (c_col < 0 || n_col < 0) throw DataError("curve file needs columns c_center and n_mean");

  std::vector<CurveBin> bins;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.size() != header.size()) {
      std::ostringstream msg;
      msg << "line " << i + 1 << ": expected " << header.size() << " fields";
      throw DataError(msg.str());
    }
    CurveBin b;
    b.c_center = parse_double(row[static_cast<std::size_t>(c_col)], i + 1);
    b.n_mean = parse_double(row[static_cast<std::size_t>(n_col)], i + 1);
    if (w_col >= 0) b.weight = parse_double(row[static_cast<std::size_t>(w_col)], i + 1);
    bins.push_back(b);
  }
  return BinnedCurve(std::move(bins));
}

void write_curve_csv(std::ostream& out, const BinnedCurve& curve) {
  out << "c_center,n_mean,weight\n";
  for (const auto& b : curve.bins()) {
    out << format_double(b.c_center) << ',' << format_double(b.n_mean) << ','
        << format_double(b.weight) << '\n';
  }
}

void write_density_csv(std::ostream& out, std::span<const DensityBin> bins) {
  out << "bin_lo,bin_hi,density\n";
  for (const auto& b : bins) {
    out << format_double(b.lo) << ',' << format_double(b.hi) << ',' << format_double(b.density)
        << '\n';
  }
}

void write_clean_csv(std::ostream& out, std::span<const CleanRecord> records) {
  out << "firm_id,year,sector,value_added,workers,productivity\n";
  for (const auto& r : records) {
    out << csv_field(r.firm_id) << ',' << r.year << ',' << csv_field(r.sector) << ','
        << format_double(r.value_added) << ',' << r.workers << ','
        << format_double(r.productivity) << '\n';
  }
}

void write_occupancy_csv(std::ostream& out, const ProductivityGrid& grid, const Limiter& lim,
                         std::span<const double> mean, std::span<const double> var) {
  out << "level_index,c,n_mean,n_var,g_of_c\n";
  for (int i = 1; i <= grid.levels(); ++i) {
    const auto k = static_cast<std::size_t>(i - 1);
    const double c = grid.productivity(i);
    out << i << ',' << format_double(c) << ',' << format_double(mean[k]) << ','
        << format_double(var[k]) << ',' << format_double(lim.capacity(c)) << '\n';
  }
}

void write_flux_csv(std::ostream& out, const FluxBalanceReport& report) {
  out << "a_lo,a_hi,b_lo,b_hi,forward,reverse,z\n";
  for (const auto& r : report.rows) {
    out << r.signature.a_lo << ',' << r.signature.a_hi << ',' << r.signature.b_lo << ','
        << r.signature.b_hi << ',' << r.forward << ',' << r.reverse << ',' << format_double(r.z)
        << '\n';
  }
}

}  // namespace labprod
