#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "veriseal/codegen.hpp"
#include "veriseal/eventlog.hpp"
#include "veriseal/rng.hpp"
#include "veriseal/time.hpp"

namespace veriseal {

/// The public half of a product's credentials. The four fields together are
/// the unique name of one manufactured unit; none of them is secret.
struct ProductIdentity {
  std::string manufacturer_id;
  std::string product_name;
  std::string batch_number;
  std::string serial_number;

  bool operator==(const ProductIdentity&) const = default;

  /// Canonical registry key: percent-encoded fields joined with '/'.
  std::string key() const;

  /// Non-empty fields, each at most 128 characters.
  bool valid() const;

  nlohmann::json to_json() const;
  static std::optional<ProductIdentity> from_json(const nlohmann::json& j);
};

enum class StateTag { Unverified, VerifiedOnce, MultiplyClaimed, Retired };

std::string to_string(StateTag tag);

struct VerificationState {
  StateTag tag = StateTag::Unverified;
  std::optional<Timestamp> first_verified_at;
  std::uint64_t presentation_count = 0;
  std::uint64_t failed_attempts = 0;

  bool operator==(const VerificationState&) const = default;
};

enum class Verdict { Counterfeit, Genuine, PreviouslyVerified, CloneAlert };

/// Wire names, also used in logs and reports.
std::string to_string(Verdict verdict);

struct VerificationOutcome {
  Verdict verdict = Verdict::Counterfeit;
  std::optional<Timestamp> original_timestamp;
  std::optional<std::uint64_t> presentation_count;

  nlohmann::json to_json() const;
};

struct ProductRecord {
  ProductIdentity identity;
  SecretCode secret;
  std::optional<SecretCode> inspection_secret;
  CodePolicy policy;
  VerificationState state;             // consumer code
  VerificationState inspection_state;  // customs code, independent counter
  std::optional<ProductIdentity> lineage;    // predecessor when resealed in
  std::optional<ProductIdentity> successor;  // set once this record is retired
  Timestamp minted_at;

  bool operator==(const ProductRecord&) const = default;

  nlohmann::json to_json() const;  // includes secrets; registry-internal
};

struct MintRequest {
  std::string manufacturer_id;
  std::string product_name;
  std::string batch_number;
  int count = 0;
  CodePolicy policy;
  bool with_inspection_codes = false;
};

struct AuthorityConfig {
  std::uint64_t clone_alert_threshold = 3;
  bool allow_low_entropy = false;  // simulations shrink codes deliberately
};

/// The manufacturer-side registry of one-time product secrets: minting,
/// single-use verification, customs resealing and audit. Pure protocol; all
/// durability goes through the EventLog and every piece of state here is the
/// fold of that log, so reopening a log reproduces the authority exactly.
///
/// Concurrency: records live in hash shards; a verification is a
/// read-modify-write under its record's shard lock, so for any one record at
/// most one caller ever sees Genuine. Mint and reseal serialize on a single
/// writer lock and never hold two shard locks at once.
class ProductAuthority {
 public:
  explicit ProductAuthority(EventLog& log, AuthorityConfig config = {});

  std::vector<ProductRecord> mint_batch(const MintRequest& request, Rng& rng,
                                        Timestamp now);

  VerificationOutcome verify(const ProductIdentity& identity,
                             const std::string& presented_code, Timestamp now);

  ProductRecord reseal(const ProductIdentity& old_identity,
                       const std::string& customs_authority_id,
                       const CodePolicy& policy, Rng& rng, Timestamp now);

  /// Complete chronological event history for one identity; empty when the
  /// identity is unknown.
  std::vector<Event> audit(const ProductIdentity& identity) const;

  std::optional<ProductRecord> lookup(const ProductIdentity& identity) const;

  std::size_t record_count() const;
  const AuthorityConfig& config() const { return config_; }

  /// Canonical dump of all materialized state, for replay equality checks.
  nlohmann::json export_state() const;

 private:
  struct Shard {
    mutable std::mutex mutex;
    std::unordered_map<std::string, ProductRecord> records;
  };
  static constexpr std::size_t kShardCount = 64;

  Shard& shard_for(const std::string& key);
  const Shard& shard_for(const std::string& key) const;
  void bootstrap_from_log();
  SecretCode fresh_unique_code(const CodePolicy& policy, Rng& rng);

  EventLog& log_;
  AuthorityConfig config_;
  std::array<Shard, kShardCount> shards_;

  // Mint-path bookkeeping: registered batches, per-batch record counts
  // (reseal serial allocation) and every secret ever issued (registry-wide
  // uniqueness). Guarded by mint_mutex_.
  mutable std::mutex mint_mutex_;
  std::unordered_set<std::string> batches_;
  std::unordered_map<std::string, int> batch_counts_;
  std::unordered_set<std::string> issued_codes_;
};

/// Fold step shared by the live path and replay: applies one event to the
/// materialized maps. Replaying a log through this function is the
/// authoritative definition of registry state.
struct ProductState {
  std::unordered_map<std::string, ProductRecord> records;
  std::unordered_set<std::string> batches;
  std::unordered_map<std::string, int> batch_counts;
  std::unordered_set<std::string> issued_codes;
};
void apply_product_event(ProductState& state, const Event& event);

std::string encode_key_component(std::string_view raw);

}  // namespace veriseal
