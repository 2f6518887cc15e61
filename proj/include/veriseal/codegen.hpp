#pragma once

#include <string>
#include <string_view>

#include "veriseal/rng.hpp"

namespace veriseal {

/// Shape of the concealed one-time codes. The default alphabet is the
/// 32-character set without I, L, O and U, which survive being read off a
/// printed label; 16 body characters give 80 bits of guessing resistance.
struct CodePolicy {
  std::string alphabet = "0123456789ABCDEFGHJKMNPQRSTVWXYZ";
  int body_length = 16;
  int group_size = 4;

  bool operator==(const CodePolicy&) const = default;
};

/// Structural validity: distinct characters, alphabet size >= 2, positive
/// lengths. Says nothing about entropy; see production_strength().
bool policy_valid(const CodePolicy& policy);

double entropy_bits(const CodePolicy& policy);

/// Production policies must carry at least 64 bits; weaker ones are only for
/// desk-scale attack experiments.
bool production_strength(const CodePolicy& policy);

struct SecretCode {
  std::string body;
  char checksum = 0;

  /// Canonical form: body immediately followed by the checksum character.
  std::string raw() const { return body + checksum; }

  /// Label form: uppercase groups separated by hyphens, checksum as the
  /// final group, e.g. XXXX-XXXX-XXXX-XXXX-C.
  std::string display(const CodePolicy& policy) const;

  bool operator==(const SecretCode&) const = default;
};

SecretCode generate_code(const CodePolicy& policy, Rng& rng);

char checksum_char(std::string_view body, const CodePolicy& policy);

/// Strips hyphens and folds case toward the policy alphabet. Returns the
/// canonical raw form; empty result means the input cannot normalize.
std::string normalize_code(std::string_view candidate,
                           const CodePolicy& policy);

/// True iff length, alphabet membership and the check character all hold.
/// Accepts display or raw form.
bool check_code_format(std::string_view candidate, const CodePolicy& policy);

}  // namespace veriseal
