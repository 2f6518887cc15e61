#include "veriseal/codegen.hpp"

#include <cctype>
#include <cmath>
#include <numeric>
#include <unordered_set>
#include <vector>

#include "veriseal/errors.hpp"

namespace veriseal {

namespace {

// Position weights for the check character. Every weight must be a unit
// modulo the alphabet size or a substitution at that position can shift the
// sum by a full cycle and slip through (with 32 characters, weight 16 misses
// any even index change). Cycling through the units keeps detection of
// single substitutions exact for every alphabet size.
std::vector<int> unit_weights(int modulus, int count) {
  std::vector<int> units;
  for (int u = 1; u < modulus; ++u) {
    if (std::gcd(u, modulus) == 1) units.push_back(u);
  }
  std::vector<int> weights(count);
  for (int i = 0; i < count; ++i) {
    weights[i] = units[i % units.size()];
  }
  return weights;
}

int index_of(char c, const std::string& alphabet) {
  auto pos = alphabet.find(c);
  return pos == std::string::npos ? -1 : static_cast<int>(pos);
}

}  // namespace

bool policy_valid(const CodePolicy& policy) {
  if (policy.body_length < 1 || policy.group_size < 1) return false;
  if (policy.alphabet.size() < 2) return false;
  std::unordered_set<char> seen;
  for (char c : policy.alphabet) {
    if (c == '-') return false;  // reserved for the display form
    if (!seen.insert(c).second) return false;
  }
  return true;
}

double entropy_bits(const CodePolicy& policy) {
  if (!policy_valid(policy)) throw PolicyInvalid("invalid code policy");
  return policy.body_length *
         std::log2(static_cast<double>(policy.alphabet.size()));
}

bool production_strength(const CodePolicy& policy) {
  return policy_valid(policy) && entropy_bits(policy) >= 64.0;
}

std::string SecretCode::display(const CodePolicy& policy) const {
  std::string out;
  out.reserve(body.size() + body.size() / policy.group_size + 2);
  for (size_t i = 0; i < body.size(); ++i) {
    if (i > 0 && i % policy.group_size == 0) out.push_back('-');
    out.push_back(body[i]);
  }
  out.push_back('-');
  out.push_back(checksum);
  return out;
}

SecretCode generate_code(const CodePolicy& policy, Rng& rng) {
  if (!policy_valid(policy)) throw PolicyInvalid("invalid code policy");
  SecretCode code;
  code.body.resize(policy.body_length);
  for (int i = 0; i < policy.body_length; ++i) {
    code.body[i] = policy.alphabet[rng.uniform_index(policy.alphabet.size())];
  }
  code.checksum = checksum_char(code.body, policy);
  return code;
}

char checksum_char(std::string_view body, const CodePolicy& policy) {
  const int m = static_cast<int>(policy.alphabet.size());
  const auto weights = unit_weights(m, static_cast<int>(body.size()));
  long long sum = 0;
  for (size_t i = 0; i < body.size(); ++i) {
    int idx = index_of(body[i], policy.alphabet);
    if (idx < 0) throw PolicyInvalid("body character outside alphabet");
    sum += static_cast<long long>(weights[i]) * idx;
  }
  return policy.alphabet[sum % m];
}

std::string normalize_code(std::string_view candidate,
                           const CodePolicy& policy) {
  std::string out;
  out.reserve(candidate.size());
  for (char c : candidate) {
    if (c == '-') continue;
    if (index_of(c, policy.alphabet) >= 0) {
      out.push_back(c);
      continue;
    }
    char folded = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (index_of(folded, policy.alphabet) >= 0) {
      out.push_back(folded);
      continue;
    }
    return {};  // not representable in this alphabet
  }
  return out;
}

bool check_code_format(std::string_view candidate, const CodePolicy& policy) {
  if (!policy_valid(policy)) return false;
  std::string raw = normalize_code(candidate, policy);
  if (raw.size() != static_cast<size_t>(policy.body_length) + 1) return false;
  std::string_view body(raw.data(), raw.size() - 1);
  return checksum_char(body, policy) == raw.back();
}

}  // namespace veriseal
