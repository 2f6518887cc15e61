#pragma once

#include <stdexcept>
#include <string>

namespace veriseal {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// codegen / protocol_core
struct PolicyInvalid : Error { using Error::Error; };
struct IdentityInvalid : Error { using Error::Error; };
struct DuplicateBatch : Error { using Error::Error; };
struct UnknownIdentity : Error { using Error::Error; };
struct AlreadyRetired : Error { using Error::Error; };

// registry
struct StorageFailure : Error { using Error::Error; };
struct CorruptLog : Error { using Error::Error; };

// upo
struct ParamsInvalid : Error { using Error::Error; };
struct ShapeMismatch : Error { using Error::Error; };
struct NoSeparation : Error { using Error::Error; };

// currency_bank
struct DuplicateSerial : Error { using Error::Error; };

// verify_service
struct MalformedDomain : Error { using Error::Error; };

// adversary_sim
struct ConfigInvalid : Error { using Error::Error; };

}  // namespace veriseal
