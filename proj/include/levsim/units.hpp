#pragma once

// Human-readable quantities for the command line: "1.8mm", "30 MHz",
// "50mK". A bare number is taken as SI.

#include <string>

namespace levsim::units {

enum class Dimension { length, frequency, temperature, mass, field, dimensionless };

/// Throws ParameterError for a malformed value or a suffix that does not
/// belong to `dimension`.
double parse_quantity(const std::string& text, Dimension dimension);

}  // namespace levsim::units
