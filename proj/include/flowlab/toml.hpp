#pragma once

#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace flowlab {

/// Parses the TOML subset used by run configs into JSON: comments, [table] and
/// [dotted.table] headers, bare/quoted/dotted keys, basic and literal strings,
/// integers, floats (including inf/nan), booleans, multi-line arrays and inline
/// tables. Dates, arrays of tables and multi-line strings are rejected.
/// Errors name the source and line.
nlohmann::json parse_toml(std::string_view text, const std::string& source = "<toml>");

}  // namespace flowlab
