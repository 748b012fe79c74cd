#pragma once

// Exact text round-trip of doubles via hexadecimal floating point.

#include <cstdio>
#include <cstdlib>
#include <string>

#include "hypflow/error.hpp"

namespace hypflow::detail {

inline std::string hex(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

inline double parse_double(const std::string& tok, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0') throw ParseError("bad number '" + tok + "'", line);
  return v;
}

}  // namespace hypflow::detail
