#pragma once

// Shortest round-trip number formatting for the JSON Lines writers. nlohmann
// handles parsing; writing goes through here so floats keep their f32 spelling.

#include <charconv>
#include <span>
#include <string>
#include <string_view>

#include "json.hpp"

namespace attnamer::detail {

inline void append_number(std::string& out, float v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, end);
}

inline void append_number(std::string& out, double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, end);
}

inline void append_array(std::string& out, std::span<const float> values) {
  out.push_back('[');
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out.push_back(',');
    append_number(out, values[i]);
  }
  out.push_back(']');
}

inline void append_string(std::string& out, std::string_view s) {
  out += nlohmann::json(std::string(s)).dump();
}

}  // namespace attnamer::detail
