#pragma once

#include <map>
#include <set>
#include <span>
#include <vector>

#include "bunet/crypto.hpp"
#include "bunet/ring.hpp"

namespace bunet {

// How a plaintext vector maps onto the plaintext polynomial. Slot encoding
// is batching (slot-wise arithmetic); coefficient encoding puts the values
// straight into the coefficients, so products are negacyclic convolutions.
enum class Encoding : u8 { slots = 0, coefficients = 1 };

struct PlainVector {
  std::vector<u64> values;  // n residues mod p
  Encoding encoding = Encoding::slots;
};

// Batching: slots form a 2 x (n/2) hypercube. Slot r*(n/2) + j holds the
// plaintext polynomial evaluated at psi^(+-3^j), + for row 0, - for row 1.
class BatchEncoder {
 public:
  explicit BatchEncoder(const RingParams& params);

  const RingParams& params() const { return params_; }
  std::size_t row_size() const { return params_.n() / 2; }

  std::vector<u64> to_poly(const PlainVector& v) const;
  PlainVector from_poly(std::span<const u64> poly, Encoding encoding) const;

  // Index k of the natural-order negacyclic NTT output feeding a slot.
  std::size_t slot_ntt_index(std::size_t slot) const { return slot_index_[slot]; }
  // Place a natural-order spectrum into slots (and back) so that
  // slot-encoding the result equals coefficient-encoding its inverse NTT.
  std::vector<u64> spectrum_to_slots(std::span<const u64> spectrum) const;
  std::vector<u64> slots_to_spectrum(std::span<const u64> slots) const;

  // Galois element for a within-row left rotation by k (0 <= k < n/2).
  u64 rotation_element(std::size_t k) const;
  u64 row_swap_element() const { return 2 * params_.n() - 1; }

 private:
  std::vector<u64> spectrum_from_slots_unchecked(std::span<const u64> slots) const;

  RingParams params_;
  std::vector<u32> slot_index_;
};

struct SecretKey {
  ModPoly s;                 // ternary, coefficient form over q
  std::vector<u64> s_eval;   // bit-reversed evaluation form over q
};

struct PublicKey {
  std::vector<u64> p0_eval, p1_eval;  // (-a s + e, a)
};

// Key switching from s(X^g) to s, one pair per base-2^base_bits digit.
struct KeySwitchKey {
  std::vector<std::vector<u64>> k0, k1;
};

struct RotationKeySet {
  int base_bits = 15;
  std::set<std::size_t> steps;
  bool row_swap = false;
  std::map<u64, KeySwitchKey> keys;  // by Galois element

  std::size_t digit_count(const Modulus& q) const { return (q.bit_count() + base_bits - 1) / base_bits; }
};

struct KeyMaterial {
  SecretKey sk;
  PublicKey pk;
  RotationKeySet rotations;
};

struct KeygenOptions {
  int base_bits = 15;
  bool row_swap = false;
};

// Deterministic for a given seed. Steps are within-row left rotations.
KeyMaterial keygen(const RingParams& params, const std::set<std::size_t>& rotation_steps, u64 seed,
                   KeygenOptions options = {});

// Ciphertexts live over q. In evaluation form the polynomials are in the
// bit-reversed negacyclic NTT order (only used between pointwise products).
struct Ciphertext {
  ModPoly c0, c1;
  Encoding layout = Encoding::slots;
  double noise_bits = 0;  // log2 of a worst-case bound on the noise

  PolyDomain domain() const { return c0.domain; }
};

// A plaintext prepared for repeated multiplication.
struct MulOperand {
  std::vector<u64> eval;  // centered lift to q, bit-reversed NTT
  Encoding encoding = Encoding::slots;
  double l1 = 0;          // L1 norm of the centered polynomial
};

class Encryptor {
 public:
  Encryptor(const RingParams& params, const SecretKey& sk);
  Encryptor(const RingParams& params, const PublicKey& pk);

  Ciphertext encrypt(const PlainVector& v, Prg& rng) const;
  Ciphertext encrypt_zero(Encoding layout, Prg& rng) const;

 private:
  Ciphertext encrypt_poly(std::span<const u64> m, Encoding layout, Prg& rng) const;

  BatchEncoder encoder_;
  const SecretKey* sk_ = nullptr;
  const PublicKey* pk_ = nullptr;
};

class Decryptor {
 public:
  Decryptor(const RingParams& params, const SecretKey& sk);

  PlainVector decrypt(const Ciphertext& ct) const;
  // log2 of the largest actual noise coefficient (test instrumentation).
  double measure_noise(const Ciphertext& ct) const;

 private:
  std::vector<u64> phase(const Ciphertext& ct) const;

  BatchEncoder encoder_;
  const SecretKey& sk_;
};

class Evaluator {
 public:
  explicit Evaluator(const RingParams& params);

  const RingParams& params() const { return encoder_.params(); }
  const BatchEncoder& encoder() const { return encoder_; }

  Ciphertext add(const Ciphertext& a, const Ciphertext& b) const;
  Ciphertext sub(const Ciphertext& a, const Ciphertext& b) const;
  void add_inplace(Ciphertext& a, const Ciphertext& b) const;
  Ciphertext add_plain(const Ciphertext& c, const PlainVector& v) const;
  Ciphertext sub_plain(const Ciphertext& c, const PlainVector& v) const;

  MulOperand prepare(const PlainVector& w) const;
  Ciphertext mul_plain(const Ciphertext& c, const PlainVector& w) const;
  Ciphertext mul_plain(const Ciphertext& c, const MulOperand& w) const;
  // c += a * w, all in evaluation form.
  void mul_plain_accumulate(Ciphertext& acc, const Ciphertext& a, const MulOperand& w) const;

  // Within-row left rotation by k, both rows at once.
  Ciphertext rot(const Ciphertext& c, std::size_t k, const RotationKeySet& keys) const;
  Ciphertext swap_rows(const Ciphertext& c, const RotationKeySet& keys) const;

  void to_eval(Ciphertext& c) const;
  void to_coeff(Ciphertext& c) const;

  // log2(Delta/2) minus the noise estimate; decryption is exact while > 0.
  double noise_budget(const Ciphertext& c) const;

 private:
  Ciphertext apply_galois(const Ciphertext& c, u64 g, const RotationKeySet& keys) const;
  void add_scaled_plain(Ciphertext& c, const PlainVector& v, bool negate) const;

  BatchEncoder encoder_;
  u64 delta_;
};

// Automorphism X -> X^g on a coefficient-form polynomial.
std::vector<u64> apply_automorphism(std::span<const u64> poly, u64 g, const Modulus& m);

// Wire format: "BUN1" | u32 n | u8 ct modulus id | u8 pt modulus id |
// u8 layout | u8 reserved | u16 noise estimate (1/256 bit) | c0 | c1, all
// little-endian, coefficients as u64.
std::vector<u8> serialize(const Ciphertext& ct, const RingParams& params);
Ciphertext deserialize_ciphertext(std::span<const u8> bytes, const RingParams& params);

std::vector<u8> serialize(const RotationKeySet& keys, const RingParams& params);
RotationKeySet deserialize_rotation_keys(std::span<const u8> bytes, const RingParams& params);

}  // namespace bunet
