#include "veriseal/protocol.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>

#include "veriseal/errors.hpp"

namespace veriseal {

namespace {

constexpr std::size_t kMaxFieldLength = 128;

bool field_ok(const std::string& f) {
  return !f.empty() && f.size() <= kMaxFieldLength;
}

std::string batch_key(const std::string& manufacturer,
                      const std::string& product, const std::string& batch) {
  return encode_key_component(manufacturer) + "/" +
         encode_key_component(product) + "/" + encode_key_component(batch);
}

std::string serial_string(int index, int count) {
  int width = 6;
  for (int c = 1000000; c <= count; c *= 10) ++width;
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%0*d", width, index);
  return buf;
}

nlohmann::json policy_to_json(const CodePolicy& p) {
  return {{"alphabet", p.alphabet},
          {"body_length", p.body_length},
          {"group_size", p.group_size}};
}

CodePolicy policy_from_json(const nlohmann::json& j) {
  CodePolicy p;
  p.alphabet = j.at("alphabet").get<std::string>();
  p.body_length = j.at("body_length").get<int>();
  p.group_size = j.at("group_size").get<int>();
  return p;
}

SecretCode code_from_raw(const std::string& raw) {
  SecretCode code;
  code.body = raw.substr(0, raw.size() - 1);
  code.checksum = raw.back();
  return code;
}

ProductRecord record_from_mint_payload(const nlohmann::json& payload,
                                       Timestamp recorded_at) {
  ProductRecord rec;
  auto identity = ProductIdentity::from_json(payload.at("identity"));
  if (!identity) throw CorruptLog("mint event without identity");
  rec.identity = *identity;
  rec.policy = policy_from_json(payload.at("policy"));
  rec.secret = code_from_raw(payload.at("secret").get<std::string>());
  if (payload.contains("inspection_secret")) {
    rec.inspection_secret =
        code_from_raw(payload.at("inspection_secret").get<std::string>());
  }
  if (payload.contains("lineage")) {
    rec.lineage = ProductIdentity::from_json(payload.at("lineage"));
  }
  rec.minted_at = recorded_at;
  return rec;
}

// Fold step for a verification event; the live path funnels through this so
// replayed state is identical by construction.
void apply_verified_payload(ProductRecord& rec, const nlohmann::json& payload,
                            Timestamp recorded_at) {
  const std::string verdict = payload.at("verdict").get<std::string>();
  const std::string channel = payload.value("channel", "consumer");
  VerificationState& st =
      channel == "inspection" ? rec.inspection_state : rec.state;
  if (verdict == "counterfeit") {
    st.failed_attempts += 1;
    return;
  }
  st.presentation_count += 1;
  if (verdict == "genuine") {
    st.first_verified_at = recorded_at;
    st.tag = StateTag::VerifiedOnce;
  } else {
    st.tag = StateTag::MultiplyClaimed;
  }
}

void apply_resealed_payload(ProductRecord& rec,
                            const nlohmann::json& payload) {
  rec.state.tag = StateTag::Retired;
  rec.inspection_state.tag = StateTag::Retired;
  if (payload.contains("successor")) {
    rec.successor = ProductIdentity::from_json(payload.at("successor"));
  }
}

}  // namespace

std::string encode_key_component(std::string_view raw) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  out.reserve(raw.size());
  for (unsigned char c : raw) {
    const bool plain = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') ||
                       (c >= '0' && c <= '9') || c == '.' || c == '_' ||
                       c == '~' || c == '-';
    if (plain) {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0xf]);
    }
  }
  return out;
}

std::string ProductIdentity::key() const {
  return encode_key_component(manufacturer_id) + "/" +
         encode_key_component(product_name) + "/" +
         encode_key_component(batch_number) + "/" +
         encode_key_component(serial_number);
}

bool ProductIdentity::valid() const {
  return field_ok(manufacturer_id) && field_ok(product_name) &&
         field_ok(batch_number) && field_ok(serial_number);
}

nlohmann::json ProductIdentity::to_json() const {
  return {{"manufacturer_id", manufacturer_id},
          {"product_name", product_name},
          {"batch_number", batch_number},
          {"serial_number", serial_number}};
}

std::optional<ProductIdentity> ProductIdentity::from_json(
    const nlohmann::json& j) {
  if (!j.is_object()) return std::nullopt;
  ProductIdentity id;
  for (auto [field, dest] :
       {std::pair{"manufacturer_id", &id.manufacturer_id},
        std::pair{"product_name", &id.product_name},
        std::pair{"batch_number", &id.batch_number},
        std::pair{"serial_number", &id.serial_number}}) {
    if (!j.contains(field) || !j[field].is_string()) return std::nullopt;
    *dest = j[field].get<std::string>();
  }
  return id;
}

std::string to_string(StateTag tag) {
  switch (tag) {
    case StateTag::Unverified: return "unverified";
    case StateTag::VerifiedOnce: return "verified_once";
    case StateTag::MultiplyClaimed: return "multiply_claimed";
    case StateTag::Retired: return "retired";
  }
  return "unknown";
}

std::string to_string(Verdict verdict) {
  switch (verdict) {
    case Verdict::Counterfeit: return "counterfeit";
    case Verdict::Genuine: return "genuine";
    case Verdict::PreviouslyVerified: return "previously_verified";
    case Verdict::CloneAlert: return "clone_alert";
  }
  return "unknown";
}

nlohmann::json VerificationOutcome::to_json() const {
  nlohmann::json j = {{"verdict", to_string(verdict)}};
  if (original_timestamp) {
    j["original_timestamp"] = format_rfc3339(*original_timestamp);
  }
  if (presentation_count) j["presentation_count"] = *presentation_count;
  return j;
}

nlohmann::json ProductRecord::to_json() const {
  auto state_json = [](const VerificationState& st) {
    nlohmann::json j = {{"tag", to_string(st.tag)},
                        {"presentation_count", st.presentation_count},
                        {"failed_attempts", st.failed_attempts}};
    if (st.first_verified_at) {
      j["first_verified_at"] = format_rfc3339(*st.first_verified_at);
    }
    return j;
  };
  nlohmann::json j = {{"identity", identity.to_json()},
                      {"secret", secret.raw()},
                      {"policy", policy_to_json(policy)},
                      {"state", state_json(state)},
                      {"minted_at", format_rfc3339(minted_at)}};
  if (inspection_secret) {
    j["inspection_secret"] = inspection_secret->raw();
    j["inspection_state"] = state_json(inspection_state);
  }
  if (lineage) j["lineage"] = lineage->to_json();
  if (successor) j["successor"] = successor->to_json();
  return j;
}

void apply_product_event(ProductState& state, const Event& event) {
  switch (event.kind) {
    case EventKind::Minted: {
      ProductRecord rec = record_from_mint_payload(event.payload,
                                                   event.recorded_at);
      const std::string bk = batch_key(rec.identity.manufacturer_id,
                                       rec.identity.product_name,
                                       rec.identity.batch_number);
      state.batches.insert(bk);
      state.batch_counts[bk] += 1;
      state.issued_codes.insert(rec.secret.raw());
      if (rec.inspection_secret) {
        state.issued_codes.insert(rec.inspection_secret->raw());
      }
      state.records[event.key] = std::move(rec);
      break;
    }
    case EventKind::Verified: {
      auto it = state.records.find(event.key);
      if (it == state.records.end()) {
        throw CorruptLog("verification event for unknown record");
      }
      apply_verified_payload(it->second, event.payload, event.recorded_at);
      break;
    }
    case EventKind::Resealed: {
      auto it = state.records.find(event.key);
      if (it == state.records.end()) {
        throw CorruptLog("reseal event for unknown record");
      }
      apply_resealed_payload(it->second, event.payload);
      break;
    }
    case EventKind::NoteEnrolled:
    case EventKind::NoteVerified:
      break;  // currency events fold elsewhere
  }
}

ProductAuthority::ProductAuthority(EventLog& log, AuthorityConfig config)
    : log_(log), config_(config) {
  if (config_.clone_alert_threshold < 2) {
    throw PolicyInvalid("clone_alert_threshold must be at least 2");
  }
  bootstrap_from_log();
}

void ProductAuthority::bootstrap_from_log() {
  ProductState state;
  log_.for_each([&](const Event& e) { apply_product_event(state, e); });
  batches_ = std::move(state.batches);
  batch_counts_ = std::move(state.batch_counts);
  issued_codes_ = std::move(state.issued_codes);
  for (auto& [key, rec] : state.records) {
    shard_for(key).records.emplace(key, std::move(rec));
  }
}

ProductAuthority::Shard& ProductAuthority::shard_for(const std::string& key) {
  return shards_[std::hash<std::string>{}(key) % kShardCount];
}

const ProductAuthority::Shard& ProductAuthority::shard_for(
    const std::string& key) const {
  return shards_[std::hash<std::string>{}(key) % kShardCount];
}

SecretCode ProductAuthority::fresh_unique_code(const CodePolicy& policy,
                                               Rng& rng) {
  // Caller holds mint_mutex_. Collisions are ~2^-80 events at the default
  // policy but cheap to rule out entirely.
  for (;;) {
    SecretCode code = generate_code(policy, rng);
    if (issued_codes_.insert(code.raw()).second) return code;
  }
}

std::vector<ProductRecord> ProductAuthority::mint_batch(
    const MintRequest& request, Rng& rng, Timestamp now) {
  if (!field_ok(request.manufacturer_id) || !field_ok(request.product_name) ||
      !field_ok(request.batch_number)) {
    throw IdentityInvalid("identity fields must be non-empty and short");
  }
  if (request.count < 1) throw PolicyInvalid("mint count must be at least 1");
  if (!policy_valid(request.policy)) throw PolicyInvalid("invalid code policy");
  if (!config_.allow_low_entropy && !production_strength(request.policy)) {
    throw PolicyInvalid("production policies need at least 64 bits");
  }

  std::lock_guard mint_lock(mint_mutex_);
  const std::string bk = batch_key(request.manufacturer_id,
                                   request.product_name, request.batch_number);
  if (batches_.contains(bk)) {
    throw DuplicateBatch("batch already minted: " + request.batch_number);
  }

  std::vector<ProductRecord> minted;
  minted.reserve(request.count);
  for (int i = 1; i <= request.count; ++i) {
    ProductIdentity identity{request.manufacturer_id, request.product_name,
                             request.batch_number,
                             serial_string(i, request.count)};
    nlohmann::json payload = {
        {"identity", identity.to_json()},
        {"secret", fresh_unique_code(request.policy, rng).raw()},
        {"policy", policy_to_json(request.policy)},
    };
    if (request.with_inspection_codes) {
      payload["inspection_secret"] =
          fresh_unique_code(request.policy, rng).raw();
    }
    const std::string key = identity.key();
    log_.append(EventKind::Minted, key, payload, now);
    ProductRecord rec = record_from_mint_payload(payload, now);
    {
      Shard& shard = shard_for(key);
      std::lock_guard lock(shard.mutex);
      shard.records[key] = rec;
    }
    minted.push_back(std::move(rec));
  }
  batches_.insert(bk);
  batch_counts_[bk] += request.count;
  return minted;
}

VerificationOutcome ProductAuthority::verify(const ProductIdentity& identity,
                                             const std::string& presented_code,
                                             Timestamp now) {
  const std::string key = identity.key();
  Shard& shard = shard_for(key);
  std::lock_guard lock(shard.mutex);

  auto it = shard.records.find(key);
  if (it == shard.records.end()) {
    // Unknown identity: no record to mutate, and deliberately the same
    // verdict as a wrong code so the endpoint is not an enumeration oracle.
    return {Verdict::Counterfeit, std::nullopt, std::nullopt};
  }
  ProductRecord& rec = it->second;

  const std::string presented = normalize_code(presented_code, rec.policy);
  const bool retired = rec.state.tag == StateTag::Retired;
  std::string channel;
  if (!retired && !presented.empty()) {
    if (presented == rec.secret.raw()) {
      channel = "consumer";
    } else if (rec.inspection_secret &&
               presented == rec.inspection_secret->raw()) {
      channel = "inspection";
    }
  }

  VerificationOutcome outcome;
  nlohmann::json payload;
  if (channel.empty()) {
    outcome.verdict = Verdict::Counterfeit;
    payload = {{"verdict", "counterfeit"}, {"channel", "consumer"}};
  } else {
    const VerificationState& st =
        channel == "inspection" ? rec.inspection_state : rec.state;
    const std::uint64_t post_count = st.presentation_count + 1;
    if (post_count == 1) {
      outcome.verdict = Verdict::Genuine;
    } else if (post_count >= config_.clone_alert_threshold) {
      outcome.verdict = Verdict::CloneAlert;
      outcome.original_timestamp = st.first_verified_at;
      outcome.presentation_count = post_count;
    } else {
      outcome.verdict = Verdict::PreviouslyVerified;
      outcome.original_timestamp = st.first_verified_at;
      outcome.presentation_count = post_count;
    }
    payload = {{"verdict", to_string(outcome.verdict)},
               {"channel", channel},
               {"presentation_count", post_count}};
  }

  log_.append(EventKind::Verified, key, payload, now);
  apply_verified_payload(rec, payload, now);
  return outcome;
}

ProductRecord ProductAuthority::reseal(const ProductIdentity& old_identity,
                                       const std::string& customs_authority_id,
                                       const CodePolicy& policy, Rng& rng,
                                       Timestamp now) {
  if (!field_ok(customs_authority_id)) {
    throw IdentityInvalid("customs authority id must be non-empty and short");
  }
  if (!policy_valid(policy)) throw PolicyInvalid("invalid code policy");
  if (!config_.allow_low_entropy && !production_strength(policy)) {
    throw PolicyInvalid("production policies need at least 64 bits");
  }

  std::lock_guard mint_lock(mint_mutex_);

  const std::string old_key = old_identity.key();
  ProductIdentity old_snapshot;
  {
    Shard& shard = shard_for(old_key);
    std::lock_guard lock(shard.mutex);
    auto it = shard.records.find(old_key);
    if (it == shard.records.end()) {
      throw UnknownIdentity("no record for " + old_key);
    }
    if (it->second.state.tag == StateTag::Retired) {
      throw AlreadyRetired("record already resealed: " + old_key);
    }
    old_snapshot = it->second.identity;
  }

  // Successor identity: the customs authority becomes the issuing party; its
  // batch namespace embeds the original manufacturer and batch so reseals of
  // distinct batches never collide.
  ProductIdentity successor;
  successor.manufacturer_id = customs_authority_id;
  successor.product_name = old_snapshot.product_name;
  successor.batch_number =
      "reseal." + old_snapshot.manufacturer_id + "." +
      old_snapshot.batch_number;
  const std::string new_bk =
      batch_key(successor.manufacturer_id, successor.product_name,
                successor.batch_number);
  const int next_serial = batch_counts_[new_bk] + 1;
  successor.serial_number = serial_string(next_serial, next_serial);

  nlohmann::json reseal_payload = {
      {"customs_authority_id", customs_authority_id},
      {"successor", successor.to_json()},
  };
  {
    Shard& shard = shard_for(old_key);
    std::lock_guard lock(shard.mutex);
    ProductRecord& rec = shard.records.at(old_key);
    if (rec.state.tag == StateTag::Retired) {
      throw AlreadyRetired("record already resealed: " + old_key);
    }
    log_.append(EventKind::Resealed, old_key, reseal_payload, now);
    apply_resealed_payload(rec, reseal_payload);
  }

  nlohmann::json mint_payload = {
      {"identity", successor.to_json()},
      {"secret", fresh_unique_code(policy, rng).raw()},
      {"policy", policy_to_json(policy)},
      {"lineage", old_snapshot.to_json()},
  };
  const std::string new_key = successor.key();
  log_.append(EventKind::Minted, new_key, mint_payload, now);
  ProductRecord rec = record_from_mint_payload(mint_payload, now);
  {
    Shard& shard = shard_for(new_key);
    std::lock_guard lock(shard.mutex);
    shard.records[new_key] = rec;
  }
  batches_.insert(new_bk);
  batch_counts_[new_bk] += 1;
  return rec;
}

std::vector<Event> ProductAuthority::audit(
    const ProductIdentity& identity) const {
  return log_.events_for_key(identity.key());
}

std::optional<ProductRecord> ProductAuthority::lookup(
    const ProductIdentity& identity) const {
  const std::string key = identity.key();
  const Shard& shard = shard_for(key);
  std::lock_guard lock(shard.mutex);
  auto it = shard.records.find(key);
  if (it == shard.records.end()) return std::nullopt;
  return it->second;
}

std::size_t ProductAuthority::record_count() const {
  std::size_t n = 0;
  for (const auto& shard : shards_) {
    std::lock_guard lock(shard.mutex);
    n += shard.records.size();
  }
  return n;
}

nlohmann::json ProductAuthority::export_state() const {
  nlohmann::json records = nlohmann::json::object();
  for (const auto& shard : shards_) {
    std::lock_guard lock(shard.mutex);
    for (const auto& [key, rec] : shard.records) {
      records[key] = rec.to_json();
    }
  }
  std::vector<std::string> batches;
  {
    std::lock_guard lock(mint_mutex_);
    batches.assign(batches_.begin(), batches_.end());
  }
  std::sort(batches.begin(), batches.end());
  return {{"records", records}, {"batches", batches}};
}

}  // namespace veriseal
