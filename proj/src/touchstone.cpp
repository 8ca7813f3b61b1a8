#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "levsim/constants.hpp"
#include "levsim/spectra.hpp"

namespace levsim::spectra {

namespace {

constexpr double kDeg = kPi / 180.0;

std::string upper(std::string s) {
  for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

bool parse_number(const std::string& token, double& out) {
  const char* begin = token.data();
  const char* end = begin + token.size();
  if (begin != end && *begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

std::string format_name(TouchstoneFormat f) {
  switch (f) {
    case TouchstoneFormat::db: return "DB";
    case TouchstoneFormat::ma: return "MA";
    case TouchstoneFormat::ri: return "RI";
  }
  return "MA";
}

std::string canonical_unit(const std::string& unit) {
  const std::string u = upper(unit);
  if (u == "HZ") return "Hz";
  if (u == "KHZ") return "kHz";
  if (u == "MHZ") return "MHz";
  if (u == "GHZ") return "GHz";
  return {};
}

void parse_option_line(const std::string& line, std::size_t line_no,
                       TouchstoneData& data) {
  std::istringstream ss(line.substr(1));
  std::string token;
  while (ss >> token) {
    const std::string u = upper(token);
    if (!canonical_unit(u).empty()) {
      data.unit = canonical_unit(u);
    } else if (u == "S") {
      continue;
    } else if (u == "Y" || u == "Z" || u == "H" || u == "G") {
      throw FormatError("only S parameters are supported", line_no);
    } else if (u == "DB") {
      data.format = TouchstoneFormat::db;
    } else if (u == "MA") {
      data.format = TouchstoneFormat::ma;
    } else if (u == "RI") {
      data.format = TouchstoneFormat::ri;
    } else if (u == "R") {
      std::string value;
      double ohms = 0.0;
      if (!(ss >> value) || !parse_number(value, ohms) || !(ohms > 0.0)) {
        throw FormatError("option line: R needs a positive reference", line_no);
      }
      data.reference_ohms = ohms;
    } else {
      throw FormatError("option line: unknown token '" + token + "'", line_no);
    }
  }
}

}  // namespace

void ResonanceTrace::validate() const {
  if (frequencies.size() != s21.size()) {
    throw ParameterError("trace arrays differ in length");
  }
  if (frequencies.size() < 16) {
    throw ParameterError("trace needs at least 16 points");
  }
  for (std::size_t i = 1; i < frequencies.size(); ++i) {
    if (!(frequencies[i] > frequencies[i - 1])) {
      throw ParameterError("trace frequencies must be strictly increasing");
    }
  }
}

double unit_multiplier(const std::string& unit) {
  const std::string u = canonical_unit(unit);
  if (u == "Hz") return 1.0;
  if (u == "kHz") return 1e3;
  if (u == "MHz") return 1e6;
  if (u == "GHz") return 1e9;
  throw FormatError("unknown frequency unit '" + unit + "'", 0);
}

std::complex<double> pair_to_complex(double a, double b, TouchstoneFormat format) {
  switch (format) {
    case TouchstoneFormat::db:
      return std::polar(std::pow(10.0, a / 20.0), b * kDeg);
    case TouchstoneFormat::ma:
      return std::polar(a, b * kDeg);
    case TouchstoneFormat::ri:
      return {a, b};
  }
  return {};
}

std::pair<double, double> complex_to_pair(std::complex<double> z,
                                          TouchstoneFormat format) {
  switch (format) {
    case TouchstoneFormat::db:
      return {20.0 * std::log10(std::abs(z)), std::arg(z) / kDeg};
    case TouchstoneFormat::ma:
      return {std::abs(z), std::arg(z) / kDeg};
    case TouchstoneFormat::ri:
      return {z.real(), z.imag()};
  }
  return {};
}

TouchstoneData read_touchstone(std::istream& in) {
  TouchstoneData data;
  bool have_option = false;
  std::string raw;
  std::size_t line_no = 0;
  std::size_t option_line = 0;
  double previous_f = -HUGE_VAL;
  while (std::getline(in, raw)) {
    ++line_no;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    const auto bang = raw.find('!');
    if (bang != std::string::npos) {
      if (trim(raw.substr(0, bang)).empty()) data.comments.push_back(raw.substr(bang + 1));
      raw.erase(bang);
    }
    const std::string line = trim(raw);
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (have_option) {
        throw FormatError("duplicate option line (first on line " +
                              std::to_string(option_line) + ")",
                          line_no);
      }
      if (!data.rows.empty()) {
        throw FormatError("option line must precede the data", line_no);
      }
      parse_option_line(line, line_no, data);
      have_option = true;
      option_line = line_no;
      continue;
    }
    if (!have_option) throw FormatError("missing option line", line_no);
    std::istringstream ss(line);
    std::vector<std::string> tokens;
    std::string token;
    while (ss >> token) tokens.push_back(token);
    if (tokens.size() != 9) {
      throw FormatError("expected 9 columns, found " + std::to_string(tokens.size()),
                        line_no);
    }
    std::array<double, 9> row{};
    for (int k = 0; k < 9; ++k) {
      if (!parse_number(tokens[k], row[k])) {
        throw FormatError("not a number: '" + tokens[k] + "'", line_no);
      }
    }
    if (!(row[0] > previous_f)) {
      throw FormatError("frequencies must be strictly increasing", line_no);
    }
    previous_f = row[0];
    data.rows.push_back(row);
  }
  if (!have_option) throw FormatError("missing option line", 0);
  return data;
}

TouchstoneData read_touchstone(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path, 0);
  return read_touchstone(in);
}

void write_touchstone(const TouchstoneData& data, std::ostream& out) {
  for (const auto& c : data.comments) out << '!' << c << '\n';
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", data.reference_ohms);
  out << "# " << canonical_unit(data.unit) << " S " << format_name(data.format)
      << " R " << buf << '\n';
  for (const auto& row : data.rows) {
    for (int k = 0; k < 9; ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", row[k]);
      out << (k ? " " : "") << buf;
    }
    out << '\n';
  }
}

TouchstoneData convert_format(const TouchstoneData& data, TouchstoneFormat format) {
  TouchstoneData out = data;
  out.format = format;
  for (auto& row : out.rows) {
    for (int p = 0; p < 4; ++p) {
      const auto z = pair_to_complex(row[1 + 2 * p], row[2 + 2 * p], data.format);
      const auto [a, b] = complex_to_pair(z, format);
      row[1 + 2 * p] = a;
      row[2 + 2 * p] = b;
    }
  }
  return out;
}

ResonanceTrace to_trace(const TouchstoneData& data) {
  const double scale = unit_multiplier(data.unit);
  ResonanceTrace trace;
  trace.frequencies.reserve(data.rows.size());
  trace.s21.reserve(data.rows.size());
  for (const auto& row : data.rows) {
    trace.frequencies.push_back(row[0] * scale);
    trace.s21.push_back(pair_to_complex(row[3], row[4], data.format));
  }
  trace.source_meta = "touchstone " + canonical_unit(data.unit) + " " +
                      format_name(data.format);
  return trace;
}

TouchstoneData touchstone_from_trace(const ResonanceTrace& trace,
                                     TouchstoneFormat format) {
  TouchstoneData data;
  data.unit = "Hz";
  data.format = format;
  if (!trace.source_meta.empty()) data.comments.push_back(" " + trace.source_meta);
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto s21 = trace.s21[i];
    const std::complex<double> refl(std::sqrt(std::max(0.0, 1.0 - std::norm(s21))), 0.0);
    std::array<double, 9> row{};
    row[0] = trace.frequencies[i];
    const std::complex<double> params[4] = {refl, s21, s21, refl};
    for (int p = 0; p < 4; ++p) {
      const auto [a, b] = complex_to_pair(params[p], format);
      row[1 + 2 * p] = a;
      row[2 + 2 * p] = b;
    }
    data.rows.push_back(row);
  }
  return data;
}

ResonanceTrace parse_touchstone(std::istream& in) {
  return to_trace(read_touchstone(in));
}

ResonanceTrace parse_touchstone(const std::string& path) {
  ResonanceTrace trace = to_trace(read_touchstone(path));
  trace.source_meta = path;
  return trace;
}

ResonanceTrace parse_csv_trace(std::istream& in) {
  ResonanceTrace trace;
  trace.source_meta = "csv";
  std::string raw;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, raw)) {
    ++line_no;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    if (trim(raw).empty()) continue;
    if (!have_header) {
      std::string header;
      for (char ch : raw) {
        if (!std::isspace(static_cast<unsigned char>(ch))) header += ch;
      }
      if (header != "freq_hz,s21_db,s21_deg") {
        throw FormatError("expected header freq_hz,s21_db,s21_deg", line_no);
      }
      have_header = true;
      continue;
    }
    std::vector<std::string> fields;
    std::stringstream ss(raw);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(trim(field));
    if (fields.size() != 3) throw FormatError("expected 3 fields", line_no);
    double v[3];
    for (int k = 0; k < 3; ++k) {
      if (!parse_number(fields[k], v[k])) {
        throw FormatError("not a number: '" + fields[k] + "'", line_no);
      }
    }
    if (!trace.frequencies.empty() && !(v[0] > trace.frequencies.back())) {
      throw FormatError("frequencies must be strictly increasing", line_no);
    }
    trace.frequencies.push_back(v[0]);
    trace.s21.push_back(pair_to_complex(v[1], v[2], TouchstoneFormat::db));
  }
  if (!have_header) throw FormatError("missing header", 0);
  if (trace.frequencies.empty()) throw NoDataError("trace CSV has no data rows");
  return trace;
}

ResonanceTrace parse_csv_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path, 0);
  ResonanceTrace trace = parse_csv_trace(in);
  trace.source_meta = path;
  return trace;
}

void write_csv_trace(const ResonanceTrace& trace, std::ostream& out) {
  out << "freq_hz,s21_db,s21_deg\n";
  char buf[96];
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto [db, deg] = complex_to_pair(trace.s21[i], TouchstoneFormat::db);
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", trace.frequencies[i], db, deg);
    out << buf;
  }
}

}  // namespace levsim::spectra
