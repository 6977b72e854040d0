#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace bunet {

using u8 = std::uint8_t;
using u16 = std::uint16_t;
using u32 = std::uint32_t;
using u64 = std::uint64_t;
using i64 = std::int64_t;
using u128 = unsigned __int128;

// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid or inconsistent parameters (moduli, dimensions, plans).
class ParamError : public Error {
 public:
  using Error::Error;
};

// Malformed bytes on disk or on the wire.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Decryption / decoding produced something that cannot be right.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// Correlated randomness or keys that are missing, exhausted or reused.
class ResourceError : public Error {
 public:
  using Error::Error;
};

// A two-party session must stop: transcript mismatch, bad frame, peer abort.
class ProtocolAbort : public Error {
 public:
  using Error::Error;
};

enum class Role : u8 { alice = 0, bob = 1 };

inline const char* role_name(Role r) { return r == Role::alice ? "alice" : "bob"; }

// How shares are requantized after products: exactly inside garbled
// circuits, or with the cheap probabilistic truncation on shares.
enum class TruncMode : u8 { exact = 0, prob = 1 };

inline const char* trunc_mode_name(TruncMode m) { return m == TruncMode::exact ? "exact" : "prob"; }

}  // namespace bunet
