#include "veriseal/time.hpp"

#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <ctime>

namespace veriseal {

std::string format_rfc3339(Timestamp t) {
  std::int64_t ms = t.millis % 1000;
  std::time_t secs = static_cast<std::time_t>(t.millis / 1000);
  if (ms < 0) {
    ms += 1000;
    secs -= 1;
  }
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ",
                tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday, tm.tm_hour,
                tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

std::optional<Timestamp> parse_rfc3339(const std::string& text) {
  std::tm tm{};
  int ms = 0;
  char tail = 0;
  // Accept both "....sssZ" and a plain seconds form.
  int n = std::sscanf(text.c_str(), "%d-%d-%dT%d:%d:%d.%3d%c", &tm.tm_year,
                      &tm.tm_mon, &tm.tm_mday, &tm.tm_hour, &tm.tm_min,
                      &tm.tm_sec, &ms, &tail);
  if (n < 6) return std::nullopt;
  if (n == 6) {
    if (text.size() < 20 || text.back() != 'Z') return std::nullopt;
  } else if (n == 8 && tail != 'Z') {
    return std::nullopt;
  } else if (n == 7) {
    return std::nullopt;
  }
  tm.tm_year -= 1900;
  tm.tm_mon -= 1;
  std::time_t secs = timegm(&tm);
  if (secs == -1) return std::nullopt;
  return Timestamp{static_cast<std::int64_t>(secs) * 1000 + ms};
}

Timestamp now_utc() {
  using namespace std::chrono;
  return Timestamp{
      duration_cast<milliseconds>(system_clock::now().time_since_epoch())
          .count()};
}

}  // namespace veriseal
