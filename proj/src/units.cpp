#include "levsim/units.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <map>

#include "levsim/errors.hpp"

namespace levsim::units {

namespace {

const std::map<std::string, double>& suffixes(Dimension d) {
  static const std::map<std::string, double> length{
      {"m", 1.0}, {"cm", 1e-2}, {"mm", 1e-3}, {"um", 1e-6}, {"\xC2\xB5m", 1e-6}, {"nm", 1e-9}};
  static const std::map<std::string, double> frequency{
      {"Hz", 1.0}, {"kHz", 1e3}, {"MHz", 1e6}, {"GHz", 1e9}};
  static const std::map<std::string, double> temperature{
      {"K", 1.0}, {"mK", 1e-3}, {"uK", 1e-6}};
  static const std::map<std::string, double> mass{
      {"kg", 1.0}, {"g", 1e-3}, {"mg", 1e-6}, {"ug", 1e-9}};
  static const std::map<std::string, double> field{{"T", 1.0}, {"mT", 1e-3}, {"uT", 1e-6}};
  static const std::map<std::string, double> none{};
  switch (d) {
    case Dimension::length: return length;
    case Dimension::frequency: return frequency;
    case Dimension::temperature: return temperature;
    case Dimension::mass: return mass;
    case Dimension::field: return field;
    case Dimension::dimensionless: return none;
  }
  return none;
}

}  // namespace

double parse_quantity(const std::string& text, Dimension dimension) {
  std::size_t b = 0, e = text.size();
  while (b < e && std::isspace(static_cast<unsigned char>(text[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1]))) --e;
  const char* first = text.data() + b;
  const char* last = text.data() + e;
  if (first != last && *first == '+') ++first;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr == first) {
    throw ParameterError("not a number: '" + text + "'");
  }
  std::string suffix(ptr, last);
  while (!suffix.empty() && std::isspace(static_cast<unsigned char>(suffix.front()))) {
    suffix.erase(suffix.begin());
  }
  if (!suffix.empty()) {
    const auto& table = suffixes(dimension);
    const auto it = table.find(suffix);
    if (it == table.end()) {
      throw ParameterError("unit '" + suffix + "' does not fit the value '" + text + "'");
    }
    value *= it->second;
  }
  if (!std::isfinite(value)) throw ParameterError("value is not finite: '" + text + "'");
  return value;
}

}  // namespace levsim::units
