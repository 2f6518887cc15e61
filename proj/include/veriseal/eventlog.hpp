#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "veriseal/time.hpp"

namespace veriseal {

enum class EventKind {
  Minted,
  Verified,
  Resealed,
  NoteEnrolled,
  NoteVerified,
};

std::string to_string(EventKind kind);
std::optional<EventKind> event_kind_from_string(const std::string& s);

struct Event {
  std::uint64_t seq = 0;
  EventKind kind = EventKind::Minted;
  std::string key;  // product identity key or currency/serial key
  nlohmann::json payload;
  Timestamp recorded_at;

  nlohmann::json to_json() const;
  static std::optional<Event> from_json(const nlohmann::json& j);
};

/// Append-only, line-delimited event store. One JSON object per line, a
/// header line first; sequence numbers are dense and strictly increasing.
/// State anywhere above this layer is a fold of these lines, so a log file
/// plus replay is always a complete backup.
///
/// Single writer: appends serialize through one mutex. Readers get
/// consistent snapshots (a prefix of the log).
class EventLog {
 public:
  enum class Durability {
    Flush,  // write() per append; survives process crash
    Sync,   // fdatasync per append; survives power loss
  };

  /// In-memory log for tests and simulations.
  EventLog();

  /// File-backed log. Replays any existing contents; a torn final line
  /// (crash mid-append) is discarded and the file truncated to the valid
  /// prefix. Damage before the final record throws CorruptLog.
  explicit EventLog(const std::filesystem::path& path,
                    std::string registry_id = "default",
                    Durability durability = Durability::Flush);
  ~EventLog();

  EventLog(const EventLog&) = delete;
  EventLog& operator=(const EventLog&) = delete;

  std::uint64_t append(EventKind kind, const std::string& key,
                       nlohmann::json payload, Timestamp recorded_at);

  std::uint64_t last_seq() const;
  const std::string& registry_id() const { return registry_id_; }
  bool recovered_torn_tail() const { return recovered_torn_tail_; }

  std::vector<Event> snapshot() const;
  std::vector<Event> events_for_key(const std::string& key) const;
  void for_each(const std::function<void(const Event&)>& fn) const;

  /// Pure reader used by replay tooling: parses a log file into events.
  /// Never mutates the file. `torn_tail_discarded`, when supplied, reports
  /// whether a damaged final line was dropped.
  static std::vector<Event> read_file(const std::filesystem::path& path,
                                      std::string* registry_id = nullptr,
                                      bool* torn_tail_discarded = nullptr);

 private:
  void write_line(const std::string& line);

  mutable std::mutex mutex_;
  std::vector<Event> events_;
  std::uint64_t last_seq_ = 0;
  std::string registry_id_ = "memory";
  int fd_ = -1;
  Durability durability_ = Durability::Flush;
  bool recovered_torn_tail_ = false;
};

}  // namespace veriseal
