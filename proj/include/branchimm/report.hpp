#pragma once

// Output plumbing: CSV tables with a provenance comment header, claim rows
// rendered as a text table or JSON lines.

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#ifndef BRANCHIMM_VERSION
#define BRANCHIMM_VERSION "unknown"
#endif

namespace branchimm {

inline constexpr const char* kToolName = "branchimm";

/// Shortest round-trip decimal form; locale independent.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw std::runtime_error("format_double failed");
  return std::string(buf, end);
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

struct OutputHeader {
  std::string version = BRANCHIMM_VERSION;
  std::string config_hash = "none";
  std::uint64_t seed = 0;
  std::string timestamp = utc_timestamp();
  std::vector<std::string> notes;  // extra comment lines, e.g. parameters

  std::string render() const {
    std::string s = "# " + std::string(kToolName) + " " + version + " config=" + config_hash +
                    " seed=" + std::to_string(seed) + " utc=" + timestamp + "\n";
    for (const auto& n : notes) s += "# " + n + "\n";
    return s;
  }
};

/// Plain CSV: `.` decimals, LF endings, no quoting (cells never contain commas).
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}

  static std::string cell(double v) { return format_double(v); }
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  static std::string cell(bool b) { return b ? "true" : "false"; }
  template <class I>
    requires std::is_integral_v<I>
  static std::string cell(I v) {
    return std::to_string(v);
  }

  template <class... Ts>
  void add(const Ts&... values) {
    std::vector<std::string> row{cell(values)...};
    add_row(std::move(row));
  }

  void add_row(std::vector<std::string> row) {
    if (row.size() != columns_.size()) throw std::invalid_argument("CsvTable: row width mismatch");
    rows_.push_back(std::move(row));
  }

  std::string body() const {
    std::string s = join(columns_);
    for (const auto& r : rows_) s += join(r);
    return s;
  }

  std::string render(const OutputHeader& h) const { return h.render() + body(); }

  void write(const std::filesystem::path& path, const OutputHeader& h) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << render(h);
  }

  std::size_t size() const { return rows_.size(); }
  const std::vector<std::vector<std::string>>& rows() const { return rows_; }

 private:
  // RFC 4180: quote cells holding separators, quotes or line breaks.
  static std::string quote(const std::string& c) {
    if (c.find_first_of(",\"\n\r") == std::string::npos) return c;
    std::string q = "\"";
    for (char ch : c) {
      if (ch == '"') q += '"';
      q += ch;
    }
    return q + "\"";
  }

  static std::string join(const std::vector<std::string>& cells) {
    std::string s;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) s += ',';
      s += quote(cells[i]);
    }
    return s + "\n";
  }

  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

/// Drops comment lines, leaving the reproducible part of a CSV file.
inline std::string csv_body(const std::string& text) {
  std::istringstream in(text);
  std::string line, out;
  while (std::getline(in, line))
    if (line.empty() || line[0] != '#') out += line + "\n";
  return out;
}

// --------------------------------------------------------------------------
// Claim rows

struct ClaimRow {
  std::string name;
  std::string location;  // topic tag of the analytic result
  double analytic = std::numeric_limits<double>::quiet_NaN();
  double mc = std::numeric_limits<double>::quiet_NaN();
  double se = std::numeric_limits<double>::quiet_NaN();
  double z = std::numeric_limits<double>::quiet_NaN();
  bool pass = false;

  bool operator==(const ClaimRow& o) const {
    auto same = [](double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; };
    return name == o.name && location == o.location && same(analytic, o.analytic) && same(mc, o.mc) &&
           same(se, o.se) && same(z, o.z) && pass == o.pass;
  }
};

inline nlohmann::json claim_to_json(const ClaimRow& r) {
  auto num = [](double v) -> nlohmann::json {
    if (std::isfinite(v)) return v;
    return nullptr;
  };
  return {{"name", r.name}, {"location", r.location}, {"analytic", num(r.analytic)}, {"mc", num(r.mc)},
          {"se", num(r.se)}, {"z", num(r.z)},           {"pass", r.pass}};
}

inline ClaimRow claim_from_json(const nlohmann::json& j) {
  auto num = [&](const char* key) {
    const auto& v = j.at(key);
    return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
  };
  ClaimRow r;
  r.name = j.at("name").get<std::string>();
  r.location = j.at("location").get<std::string>();
  r.analytic = num("analytic");
  r.mc = num("mc");
  r.se = num("se");
  r.z = num("z");
  r.pass = j.at("pass").get<bool>();
  return r;
}

inline std::string claims_to_json_lines(const std::vector<ClaimRow>& rows) {
  std::string s;
  for (const auto& r : rows) s += claim_to_json(r).dump() + "\n";
  return s;
}

inline std::vector<ClaimRow> claims_from_json_lines(const std::string& text) {
  std::vector<ClaimRow> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(claim_from_json(nlohmann::json::parse(line)));
  return out;
}

inline CsvTable claims_table(const std::vector<ClaimRow>& rows) {
  CsvTable t({"name", "location", "analytic", "mc", "se", "z", "pass"});
  for (const auto& r : rows) t.add(r.name, r.location, r.analytic, r.mc, r.se, r.z, r.pass);
  return t;
}

/// Fixed-width human-readable summary; empty input gives an empty string.
inline std::string report_summary(const std::vector<ClaimRow>& rows) {
  if (rows.empty()) return {};
  std::size_t wn = 5, wl = 8;
  for (const auto& r : rows) {
    wn = std::max(wn, r.name.size());
    wl = std::max(wl, r.location.size());
  }
  auto num = [](double v) {
    if (std::isnan(v)) return std::string("-");
    std::ostringstream os;
    os << std::setprecision(6) << v;
    return os.str();
  };
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(wn)) << "claim" << "  " << std::setw(static_cast<int>(wl))
     << "location" << "  " << std::setw(12) << "analytic" << std::setw(12) << "mc" << std::setw(12) << "se"
     << std::setw(10) << "z" << "result\n";
  for (const auto& r : rows)
    os << std::left << std::setw(static_cast<int>(wn)) << r.name << "  " << std::setw(static_cast<int>(wl))
       << r.location << "  " << std::setw(12) << num(r.analytic) << std::setw(12) << num(r.mc) << std::setw(12)
       << num(r.se) << std::setw(10) << num(r.z) << (r.pass ? "PASS" : "FAIL") << "\n";
  return os.str();
}

}  // namespace branchimm
