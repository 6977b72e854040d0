#pragma once

#include <array>
#include <span>
#include <string_view>
#include <vector>

#include <emmintrin.h>

#include "bunet/common.hpp"

namespace bunet {

// 128-bit value used for wire labels, PRG output and AES state.
struct Block {
  __m128i v;

  Block() : v(_mm_setzero_si128()) {}
  explicit Block(__m128i x) : v(x) {}
  Block(u64 hi, u64 lo) : v(_mm_set_epi64x(static_cast<long long>(hi), static_cast<long long>(lo))) {}

  u64 lo() const { return static_cast<u64>(_mm_cvtsi128_si64(v)); }
  u64 hi() const { return static_cast<u64>(_mm_cvtsi128_si64(_mm_unpackhi_epi64(v, v))); }
  bool lsb() const { return (lo() & 1) != 0; }

  Block operator^(const Block& o) const { return Block(_mm_xor_si128(v, o.v)); }
  Block& operator^=(const Block& o) {
    v = _mm_xor_si128(v, o.v);
    return *this;
  }
  bool operator==(const Block& o) const { return lo() == o.lo() && hi() == o.hi(); }
  bool operator!=(const Block& o) const { return !(*this == o); }
};

// Doubling in GF(2^128) with the x^128 + x^7 + x^2 + x + 1 polynomial.
Block gf_double(const Block& b);

// AES-128 with a fixed, expanded key (AES-NI).
class Aes128 {
 public:
  explicit Aes128(const Block& key);

  Block encrypt(const Block& in) const;
  void encrypt_blocks(std::span<Block> blocks) const;

 private:
  __m128i round_keys_[11];
};

// Tweakable correlation-robust hash H(a, b, tweak) = pi(K) ^ K with
// K = 2a ^ 4b ^ tweak and pi a fixed-key AES permutation.
class GateHash {
 public:
  GateHash();
  Block operator()(const Block& a, const Block& b, u64 tweak) const;

 private:
  Aes128 pi_;
};

using Digest = std::array<u8, 32>;

Digest sha256(std::span<const u8> data);
Digest sha256(std::string_view data);
std::string to_hex(std::span<const u8> bytes);

// Incremental SHA-256.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;
  Sha256(Sha256&& other) noexcept;
  Sha256& operator=(Sha256&& other) noexcept;

  void update(std::span<const u8> data);
  // Digest of everything absorbed so far; the state keeps absorbing afterwards.
  Digest peek() const;

 private:
  void* ctx_;
};

// Derive a 128-bit key from a user seed and a domain-separation label.
Block derive_key(u64 seed, std::string_view domain);

// AES-CTR pseudorandom generator. Deterministic for a given key.
class Prg {
 public:
  explicit Prg(const Block& key);
  Prg(u64 seed, std::string_view domain) : Prg(derive_key(seed, domain)) {}

  Block next_block();
  u64 next_u64();
  u32 next_u32();
  bool next_bit();
  // Uniform in [0, bound) by rejection; bound > 0.
  u64 uniform(u64 bound);
  void fill_uniform(std::span<u64> out, u64 bound);

 private:
  void refill();

  Aes128 aes_;
  u64 counter_ = 0;
  std::array<Block, 8> buffer_{};
  std::size_t used_ = 8;
  u64 half_ = 0;
  bool have_half_ = false;
  u64 bit_pool_ = 0;
  int bits_left_ = 0;
};

}  // namespace bunet
