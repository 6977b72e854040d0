#pragma once

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "bunet/common.hpp"

namespace bunet {

// Single-word prime modulus (< 2^62) with Barrett constants.
class Modulus {
 public:
  explicit Modulus(u64 value);

  u64 value() const { return value_; }
  int bit_count() const { return bits_; }

  u64 add(u64 a, u64 b) const {
    const u64 s = a + b;
    return s >= value_ ? s - value_ : s;
  }
  u64 sub(u64 a, u64 b) const { return a >= b ? a - b : a + value_ - b; }
  u64 neg(u64 a) const { return a == 0 ? 0 : value_ - a; }

  // Barrett reduction of a product of two residues (z < value^2).
  u64 reduce_product(u128 z) const {
    const u128 qhat = ((z >> (bits_ - 1)) * barrett_) >> (bits_ + 1);
    u64 r = static_cast<u64>(z - qhat * value_);
    while (r >= value_) r -= value_;
    return r;
  }
  u64 mul(u64 a, u64 b) const { return reduce_product(static_cast<u128>(a) * b); }

  // Shoup precomputation for repeated multiplication by a fixed w.
  u64 shoup(u64 w) const { return static_cast<u64>((static_cast<u128>(w) << 64) / value_); }
  u64 mul_shoup(u64 x, u64 w, u64 w_shoup) const {
    const u64 qhat = static_cast<u64>((static_cast<u128>(x) * w_shoup) >> 64);
    u64 r = x * w - qhat * value_;
    return r >= value_ ? r - value_ : r;
  }

  u64 pow(u64 base, u64 exp) const;
  u64 inv(u64 a) const;  // prime modulus: Fermat

  // Reduce an arbitrary signed integer.
  u64 from_signed(i64 x) const {
    const i64 m = static_cast<i64>(value_);
    i64 r = x % m;
    return static_cast<u64>(r < 0 ? r + m : r);
  }
  // Representative in [-value/2, value/2).
  i64 to_signed(u64 x) const {
    return x >= (value_ + 1) / 2 ? static_cast<i64>(x) - static_cast<i64>(value_) : static_cast<i64>(x);
  }

  bool operator==(const Modulus& o) const { return value_ == o.value_; }

 private:
  u64 value_;
  int bits_;
  u128 barrett_;
};

bool is_prime(u64 n);

enum class NttStyle : u8 { cyclic, negacyclic };
enum class ConvStyle : u8 { linear, cyclic, negacyclic };

// Roots and twiddles for length-n transforms over one modulus. The cyclic
// style needs an n-th root of unity, the negacyclic style a 2n-th one.
class NttTables {
 public:
  NttTables(std::size_t n, const Modulus& modulus);

  std::size_t n() const { return n_; }
  const Modulus& modulus() const { return mod_; }
  bool supports(NttStyle style) const { return style == NttStyle::cyclic ? has_omega_ : has_psi_; }
  // Primitive 2n-th root (negacyclic) or n-th root (cyclic).
  u64 psi() const;
  u64 omega() const;

  // Natural-order transforms: out[k] = sum_j x_j r^{j e_k} with e_k = k
  // (cyclic, r = omega) or e_k = 2k+1 (negacyclic, r = psi).
  void forward(std::span<u64> a, NttStyle style) const;
  void inverse(std::span<u64> a, NttStyle style) const;

  // Negacyclic transforms with bit-reversed evaluation order; the fast path
  // for ring multiplication where ordering is irrelevant.
  void forward_negacyclic_bitrev(std::span<u64> a) const;
  void inverse_negacyclic_bitrev(std::span<u64> a) const;

 private:
  void require(NttStyle style) const;
  void cyclic_core(std::span<u64> a, const std::vector<u64>& roots, const std::vector<u64>& roots_shoup) const;

  std::size_t n_;
  int log_n_;
  Modulus mod_;
  bool has_psi_ = false;
  bool has_omega_ = false;
  u64 psi_ = 0;
  u64 omega_ = 0;
  u64 n_inv_ = 0;
  u64 n_inv_shoup_ = 0;
  std::vector<u64> psi_rev_, psi_rev_shoup_;          // psi^{bitrev(i)}
  std::vector<u64> psi_inv_rev_, psi_inv_rev_shoup_;  // psi^{-bitrev(i)}
  std::vector<u64> omega_pow_, omega_pow_shoup_;      // omega^i, i < n/2
  std::vector<u64> omega_inv_pow_, omega_inv_pow_shoup_;
  std::vector<u32> bitrev_;
};

// Deterministic search for a primitive root of the given order: try
// generators 2, 3, ... and return the first g^((m-1)/order) of exact order.
std::optional<u64> find_primitive_root(u64 order, const Modulus& modulus);

enum class ModulusId : u8 { q = 0, p = 1 };
enum class PolyDomain : u8 { coefficient, evaluation };

// Parameter set shared by both parties: degree n, ciphertext modulus q and
// plaintext modulus p, both NTT-friendly for 2n.
class RingParams {
 public:
  RingParams(std::size_t n, u64 q, u64 p);

  // n = 2048, 60-bit q, 20-bit p.
  static const RingParams& standard();

  std::size_t n() const { return n_; }
  const Modulus& q() const { return q_; }
  const Modulus& p() const { return p_; }
  const Modulus& modulus(ModulusId id) const { return id == ModulusId::q ? q_ : p_; }
  const NttTables& tables(ModulusId id) const { return id == ModulusId::q ? *q_tables_ : *p_tables_; }
  u64 psi_q() const { return q_tables_->psi(); }
  u64 psi_p() const { return p_tables_->psi(); }

  bool operator==(const RingParams& o) const { return n_ == o.n_ && q_ == o.q_ && p_ == o.p_; }

 private:
  std::size_t n_;
  Modulus q_;
  Modulus p_;
  std::shared_ptr<const NttTables> q_tables_;
  std::shared_ptr<const NttTables> p_tables_;
};

inline constexpr u64 kDefaultQ = 1152921500113727489ULL;  // 60 bits, = 1 mod 4096*p
inline constexpr u64 kDefaultP = 1032193ULL;              // 20 bits, = 1 mod 4096
inline constexpr std::size_t kDefaultN = 2048;

struct ModPoly {
  std::vector<u64> coeffs;
  PolyDomain domain = PolyDomain::coefficient;
  ModulusId modulus = ModulusId::p;
};

ModPoly ntt_forward(const ModPoly& poly, const RingParams& params, NttStyle style);
ModPoly ntt_inverse(const ModPoly& poly, const RingParams& params, NttStyle style);

// Direct O(l^2) convolution used as the oracle for every transform-based
// convolution. For cyclic/negacyclic styles the result has length n
// (n = 0 means max(|x|, |w|)); the linear result has length |x|+|w|-1.
std::vector<u64> poly_conv_reference(std::span<const u64> x, std::span<const u64> w, const Modulus& modulus,
                                     ConvStyle style, std::size_t n = 0);

// Pointwise product in place: a[i] *= b[i].
void pointwise_mul(std::span<u64> a, std::span<const u64> b, const Modulus& modulus);

}  // namespace bunet
