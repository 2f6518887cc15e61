#include "veriseal/eventlog.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include "veriseal/errors.hpp"

namespace veriseal {

namespace {

constexpr int kFormatVersion = 1;

struct ParsedFile {
  std::string registry_id;
  std::vector<Event> events;
  std::uint64_t valid_bytes = 0;  // length of the intact prefix
  bool torn_tail = false;
};

// Parses the whole file, enforcing header shape and dense sequence numbers.
// Only the final line may be damaged; it is then reported as a torn tail.
ParsedFile parse_log_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StorageFailure("cannot open log file: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string content = buffer.str();

  ParsedFile out;
  size_t pos = 0;
  bool have_header = false;
  while (pos < content.size()) {
    size_t nl = content.find('\n', pos);
    const bool has_newline = nl != std::string::npos;
    const std::string line =
        content.substr(pos, has_newline ? nl - pos : std::string::npos);
    const size_t line_end = has_newline ? nl + 1 : content.size();
    const bool is_final = line_end >= content.size();

    auto fail_line = [&](const std::string& what) {
      if (is_final) {
        // Crash mid-append: drop the tail, keep the intact prefix.
        out.torn_tail = true;
        return true;
      }
      throw CorruptLog(what);
    };

    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !has_newline) {
      if (fail_line("malformed record at byte " + std::to_string(pos))) break;
    }
    if (!have_header) {
      if (!j.contains("format_version") || !j.contains("registry_id") ||
          j["format_version"] != kFormatVersion) {
        if (out.events.empty() && is_final && !j.contains("seq")) {
          out.torn_tail = true;
          break;
        }
        throw CorruptLog("bad log header");
      }
      out.registry_id = j["registry_id"].get<std::string>();
      have_header = true;
      out.valid_bytes = line_end;
      pos = line_end;
      continue;
    }
    auto event = Event::from_json(j);
    if (!event) {
      if (fail_line("unreadable record at seq " +
                    std::to_string(out.events.size() + 1)))
        break;
    }
    if (event->seq != out.events.size() + 1) {
      // A mid-log gap is corruption; a wrong-numbered final line is too
      // (a tear shortens the line, it cannot renumber it).
      throw CorruptLog("sequence gap at record " +
                       std::to_string(out.events.size() + 1));
    }
    out.events.push_back(std::move(*event));
    out.valid_bytes = line_end;
    pos = line_end;
  }
  return out;
}

}  // namespace

std::string to_string(EventKind kind) {
  switch (kind) {
    case EventKind::Minted: return "minted";
    case EventKind::Verified: return "verified";
    case EventKind::Resealed: return "resealed";
    case EventKind::NoteEnrolled: return "note_enrolled";
    case EventKind::NoteVerified: return "note_verified";
  }
  return "unknown";
}

std::optional<EventKind> event_kind_from_string(const std::string& s) {
  if (s == "minted") return EventKind::Minted;
  if (s == "verified") return EventKind::Verified;
  if (s == "resealed") return EventKind::Resealed;
  if (s == "note_enrolled") return EventKind::NoteEnrolled;
  if (s == "note_verified") return EventKind::NoteVerified;
  return std::nullopt;
}

nlohmann::json Event::to_json() const {
  return {
      {"seq", seq},
      {"kind", to_string(kind)},
      {"key", key},
      {"payload", payload},
      {"recorded_at", format_rfc3339(recorded_at)},
  };
}

std::optional<Event> Event::from_json(const nlohmann::json& j) {
  if (!j.is_object()) return std::nullopt;
  if (!j.contains("seq") || !j.contains("kind") || !j.contains("key") ||
      !j.contains("payload") || !j.contains("recorded_at")) {
    return std::nullopt;
  }
  if (!j["seq"].is_number_unsigned() || !j["kind"].is_string() ||
      !j["key"].is_string() || !j["recorded_at"].is_string()) {
    return std::nullopt;
  }
  auto kind = event_kind_from_string(j["kind"].get<std::string>());
  if (!kind) return std::nullopt;
  auto ts = parse_rfc3339(j["recorded_at"].get<std::string>());
  if (!ts) return std::nullopt;
  Event e;
  e.seq = j["seq"].get<std::uint64_t>();
  e.kind = *kind;
  e.key = j["key"].get<std::string>();
  e.payload = j["payload"];
  e.recorded_at = *ts;
  return e;
}

EventLog::EventLog() = default;

EventLog::EventLog(const std::filesystem::path& path, std::string registry_id,
                   Durability durability)
    : registry_id_(std::move(registry_id)), durability_(durability) {
  const bool exists = std::filesystem::exists(path);
  std::uint64_t keep_bytes = 0;
  if (exists && std::filesystem::file_size(path) > 0) {
    ParsedFile parsed = parse_log_file(path);
    if (!parsed.registry_id.empty()) registry_id_ = parsed.registry_id;
    events_ = std::move(parsed.events);
    last_seq_ = events_.size();
    recovered_torn_tail_ = parsed.torn_tail;
    keep_bytes = parsed.valid_bytes;
  }

  fd_ = ::open(path.c_str(), O_RDWR | O_CREAT, 0644);
  if (fd_ < 0) throw StorageFailure("cannot open log: " + path.string());
  if (exists) {
    if (::ftruncate(fd_, static_cast<off_t>(keep_bytes)) != 0) {
      throw StorageFailure("cannot truncate torn tail: " + path.string());
    }
  }
  if (::lseek(fd_, 0, SEEK_END) < 0) {
    throw StorageFailure("cannot seek log: " + path.string());
  }
  if (keep_bytes == 0) {
    nlohmann::json header = {{"format_version", kFormatVersion},
                             {"registry_id", registry_id_}};
    write_line(header.dump());
  }
}

EventLog::~EventLog() {
  if (fd_ >= 0) ::close(fd_);
}

void EventLog::write_line(const std::string& line) {
  std::string data = line;
  data.push_back('\n');
  size_t off = 0;
  while (off < data.size()) {
    ssize_t n = ::write(fd_, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw StorageFailure(std::string("log write failed: ") +
                           std::strerror(errno));
    }
    off += static_cast<size_t>(n);
  }
  if (durability_ == Durability::Sync && ::fdatasync(fd_) != 0) {
    throw StorageFailure(std::string("log sync failed: ") +
                         std::strerror(errno));
  }
}

std::uint64_t EventLog::append(EventKind kind, const std::string& key,
                               nlohmann::json payload, Timestamp recorded_at) {
  std::lock_guard lock(mutex_);
  Event e;
  e.seq = last_seq_ + 1;
  e.kind = kind;
  e.key = key;
  e.payload = std::move(payload);
  e.recorded_at = recorded_at;
  if (fd_ >= 0) write_line(e.to_json().dump());
  last_seq_ = e.seq;
  events_.push_back(std::move(e));
  return last_seq_;
}

std::uint64_t EventLog::last_seq() const {
  std::lock_guard lock(mutex_);
  return last_seq_;
}

std::vector<Event> EventLog::snapshot() const {
  std::lock_guard lock(mutex_);
  return events_;
}

std::vector<Event> EventLog::events_for_key(const std::string& key) const {
  std::lock_guard lock(mutex_);
  std::vector<Event> out;
  for (const auto& e : events_) {
    if (e.key == key) out.push_back(e);
  }
  return out;
}

void EventLog::for_each(const std::function<void(const Event&)>& fn) const {
  std::lock_guard lock(mutex_);
  for (const auto& e : events_) fn(e);
}

std::vector<Event> EventLog::read_file(const std::filesystem::path& path,
                                       std::string* registry_id,
                                       bool* torn_tail_discarded) {
  ParsedFile parsed = parse_log_file(path);
  if (registry_id) *registry_id = parsed.registry_id;
  if (torn_tail_discarded) *torn_tail_discarded = parsed.torn_tail;
  return std::move(parsed.events);
}

}  // namespace veriseal
