#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>

namespace veriseal {

/// UTC instant with millisecond resolution. All protocol timestamps are
/// caller-supplied so state machines stay deterministic under test.
struct Timestamp {
  std::int64_t millis = 0;  // since Unix epoch

  auto operator<=>(const Timestamp&) const = default;
};

// RFC 3339 with fixed millisecond field, e.g. "2026-08-10T12:34:56.789Z".
std::string format_rfc3339(Timestamp t);
std::optional<Timestamp> parse_rfc3339(const std::string& text);

Timestamp now_utc();

}  // namespace veriseal
