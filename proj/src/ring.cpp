#include "bunet/ring.hpp"

#include <algorithm>
#include <bit>
#include <string>

namespace bunet {

Modulus::Modulus(u64 value) : value_(value) {
  if (value < 2 || value >= (1ULL << 62)) throw ParamError("modulus must be in [2, 2^62), got " + std::to_string(value));
  bits_ = std::bit_width(value);
  barrett_ = (static_cast<u128>(1) << (2 * bits_)) / value;
}

u64 Modulus::pow(u64 base, u64 exp) const {
  u64 result = 1 % value_;
  base %= value_;
  while (exp) {
    if (exp & 1) result = mul(result, base);
    base = mul(base, base);
    exp >>= 1;
  }
  return result;
}

u64 Modulus::inv(u64 a) const {
  if (a % value_ == 0) throw ParamError("inverse of zero");
  return pow(a, value_ - 2);
}

namespace {

u64 mulmod_generic(u64 a, u64 b, u64 m) { return static_cast<u64>(static_cast<u128>(a) * b % m); }

u64 powmod_generic(u64 b, u64 e, u64 m) {
  u64 r = 1 % m;
  b %= m;
  while (e) {
    if (e & 1) r = mulmod_generic(r, b, m);
    b = mulmod_generic(b, b, m);
    e >>= 1;
  }
  return r;
}

u32 reverse_bits(u32 x, int bits) {
  u32 r = 0;
  for (int i = 0; i < bits; ++i) r |= ((x >> i) & 1u) << (bits - 1 - i);
  return r;
}

}  // namespace

bool is_prime(u64 n) {
  if (n < 2) return false;
  for (u64 sp : {2ULL, 3ULL, 5ULL, 7ULL, 11ULL, 13ULL, 17ULL, 19ULL, 23ULL, 29ULL, 31ULL, 37ULL}) {
    if (n % sp == 0) return n == sp;
  }
  u64 d = n - 1;
  int s = 0;
  while ((d & 1) == 0) {
    d >>= 1;
    ++s;
  }
  for (u64 a : {2ULL, 3ULL, 5ULL, 7ULL, 11ULL, 13ULL, 17ULL, 19ULL, 23ULL, 29ULL, 31ULL, 37ULL}) {
    u64 x = powmod_generic(a, d, n);
    if (x == 1 || x == n - 1) continue;
    bool composite = true;
    for (int r = 1; r < s; ++r) {
      x = mulmod_generic(x, x, n);
      if (x == n - 1) {
        composite = false;
        break;
      }
    }
    if (composite) return false;
  }
  return true;
}

std::optional<u64> find_primitive_root(u64 order, const Modulus& modulus) {
  const u64 m = modulus.value();
  if (order < 2 || (order & (order - 1)) != 0) throw ParamError("root order must be a power of two >= 2");
  if ((m - 1) % order != 0) return std::nullopt;
  for (u64 g = 2; g < m; ++g) {
    const u64 r = modulus.pow(g, (m - 1) / order);
    if (modulus.pow(r, order / 2) == m - 1) return r;
  }
  return std::nullopt;
}

NttTables::NttTables(std::size_t n, const Modulus& modulus) : n_(n), mod_(modulus) {
  if (n < 2 || (n & (n - 1)) != 0) throw ParamError("NTT length must be a power of two >= 2");
  log_n_ = std::countr_zero(n);
  if (!is_prime(modulus.value())) throw ParamError("NTT modulus must be prime");

  if (auto w = find_primitive_root(n, mod_)) {
    has_omega_ = true;
    omega_ = *w;
  }
  if (auto s = find_primitive_root(2 * n, mod_)) {
    has_psi_ = true;
    psi_ = *s;
    omega_ = mod_.mul(psi_, psi_);  // keep the two styles consistent
  }
  if (!has_omega_) throw ParamError("modulus " + std::to_string(modulus.value()) + " has no " + std::to_string(n) +
                                    "-th root of unity");

  n_inv_ = mod_.inv(static_cast<u64>(n % mod_.value()));
  n_inv_shoup_ = mod_.shoup(n_inv_);

  bitrev_.resize(n);
  for (u32 i = 0; i < n; ++i) bitrev_[i] = reverse_bits(i, log_n_);

  const u64 omega_inv = mod_.inv(omega_);
  omega_pow_.resize(n / 2);
  omega_inv_pow_.resize(n / 2);
  u64 w = 1, wi = 1;
  for (std::size_t i = 0; i < n / 2; ++i) {
    omega_pow_[i] = w;
    omega_inv_pow_[i] = wi;
    w = mod_.mul(w, omega_);
    wi = mod_.mul(wi, omega_inv);
  }
  omega_pow_shoup_.resize(n / 2);
  omega_inv_pow_shoup_.resize(n / 2);
  for (std::size_t i = 0; i < n / 2; ++i) {
    omega_pow_shoup_[i] = mod_.shoup(omega_pow_[i]);
    omega_inv_pow_shoup_[i] = mod_.shoup(omega_inv_pow_[i]);
  }

  if (has_psi_) {
    const u64 psi_inv = mod_.inv(psi_);
    psi_rev_.resize(n);
    psi_inv_rev_.resize(n);
    psi_rev_shoup_.resize(n);
    psi_inv_rev_shoup_.resize(n);
    u64 p = 1, pi = 1;
    for (std::size_t i = 0; i < n; ++i) {
      psi_rev_[bitrev_[i]] = p;
      psi_inv_rev_[bitrev_[i]] = pi;
      p = mod_.mul(p, psi_);
      pi = mod_.mul(pi, psi_inv);
    }
    for (std::size_t i = 0; i < n; ++i) {
      psi_rev_shoup_[i] = mod_.shoup(psi_rev_[i]);
      psi_inv_rev_shoup_[i] = mod_.shoup(psi_inv_rev_[i]);
    }
  }
}

u64 NttTables::psi() const {
  require(NttStyle::negacyclic);
  return psi_;
}

u64 NttTables::omega() const { return omega_; }

void NttTables::require(NttStyle style) const {
  if (!supports(style)) {
    throw ParamError("modulus " + std::to_string(mod_.value()) + " lacks the root of unity for a " +
                     std::string(style == NttStyle::cyclic ? "cyclic" : "negacyclic") + " transform of length " +
                     std::to_string(n_));
  }
}

void NttTables::cyclic_core(std::span<u64> a, const std::vector<u64>& roots,
                            const std::vector<u64>& roots_shoup) const {
  for (std::size_t i = 0; i < n_; ++i) {
    const std::size_t j = bitrev_[i];
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n_; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t step = n_ / len;
    for (std::size_t i = 0; i < n_; i += len) {
      for (std::size_t j = 0; j < half; ++j) {
        const u64 u = a[i + j];
        const u64 v = mod_.mul_shoup(a[i + j + half], roots[j * step], roots_shoup[j * step]);
        a[i + j] = mod_.add(u, v);
        a[i + j + half] = mod_.sub(u, v);
      }
    }
  }
}

void NttTables::forward(std::span<u64> a, NttStyle style) const {
  require(style);
  if (a.size() != n_) throw ParamError("NTT input length mismatch");
  if (style == NttStyle::negacyclic) {
    u64 t = 1;
    for (std::size_t j = 0; j < n_; ++j) {
      a[j] = mod_.mul(a[j], t);
      t = mod_.mul(t, psi_);
    }
  }
  cyclic_core(a, omega_pow_, omega_pow_shoup_);
}

void NttTables::inverse(std::span<u64> a, NttStyle style) const {
  require(style);
  if (a.size() != n_) throw ParamError("NTT input length mismatch");
  cyclic_core(a, omega_inv_pow_, omega_inv_pow_shoup_);
  for (auto& x : a) x = mod_.mul_shoup(x, n_inv_, n_inv_shoup_);
  if (style == NttStyle::negacyclic) {
    const u64 psi_inv = mod_.inv(psi_);
    u64 t = 1;
    for (std::size_t j = 0; j < n_; ++j) {
      a[j] = mod_.mul(a[j], t);
      t = mod_.mul(t, psi_inv);
    }
  }
}

void NttTables::forward_negacyclic_bitrev(std::span<u64> a) const {
  require(NttStyle::negacyclic);
  std::size_t t = n_;
  for (std::size_t m = 1; m < n_; m <<= 1) {
    t >>= 1;
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t j1 = 2 * i * t;
      const u64 s = psi_rev_[m + i];
      const u64 s_shoup = psi_rev_shoup_[m + i];
      for (std::size_t j = j1; j < j1 + t; ++j) {
        const u64 u = a[j];
        const u64 v = mod_.mul_shoup(a[j + t], s, s_shoup);
        a[j] = mod_.add(u, v);
        a[j + t] = mod_.sub(u, v);
      }
    }
  }
}

void NttTables::inverse_negacyclic_bitrev(std::span<u64> a) const {
  require(NttStyle::negacyclic);
  std::size_t t = 1;
  for (std::size_t m = n_; m > 1; m >>= 1) {
    const std::size_t h = m / 2;
    std::size_t j1 = 0;
    for (std::size_t i = 0; i < h; ++i) {
      const u64 s = psi_inv_rev_[h + i];
      const u64 s_shoup = psi_inv_rev_shoup_[h + i];
      for (std::size_t j = j1; j < j1 + t; ++j) {
        const u64 u = a[j];
        const u64 v = a[j + t];
        a[j] = mod_.add(u, v);
        a[j + t] = mod_.mul_shoup(mod_.sub(u, v), s, s_shoup);
      }
      j1 += 2 * t;
    }
    t <<= 1;
  }
  for (auto& x : a) x = mod_.mul_shoup(x, n_inv_, n_inv_shoup_);
}

RingParams::RingParams(std::size_t n, u64 q, u64 p) : n_(n), q_(q), p_(p) {
  if (n < 2 || (n & (n - 1)) != 0) throw ParamError("ring degree must be a power of two");
  if (!is_prime(q) || !is_prime(p)) throw ParamError("q and p must be prime");
  if ((q - 1) % (2 * n) != 0) throw ParamError("q must be 1 mod 2n");
  if ((p - 1) % (2 * n) != 0) throw ParamError("p must be 1 mod 2n");
  // 16 bits of headroom between the plaintext and ciphertext moduli.
  if (p >= (q >> 16)) throw ParamError("p leaves no noise headroom below q");
  q_tables_ = std::make_shared<NttTables>(n, q_);
  p_tables_ = std::make_shared<NttTables>(n, p_);
}

const RingParams& RingParams::standard() {
  static const RingParams params(kDefaultN, kDefaultQ, kDefaultP);
  return params;
}

ModPoly ntt_forward(const ModPoly& poly, const RingParams& params, NttStyle style) {
  if (poly.domain != PolyDomain::coefficient) throw ParamError("ntt_forward expects coefficient form");
  if (poly.coeffs.size() != params.n()) throw ParamError("polynomial length must equal n");
  ModPoly out = poly;
  params.tables(poly.modulus).forward(out.coeffs, style);
  out.domain = PolyDomain::evaluation;
  return out;
}

ModPoly ntt_inverse(const ModPoly& poly, const RingParams& params, NttStyle style) {
  if (poly.domain != PolyDomain::evaluation) throw ParamError("ntt_inverse expects evaluation form");
  if (poly.coeffs.size() != params.n()) throw ParamError("polynomial length must equal n");
  ModPoly out = poly;
  params.tables(poly.modulus).inverse(out.coeffs, style);
  out.domain = PolyDomain::coefficient;
  return out;
}

std::vector<u64> poly_conv_reference(std::span<const u64> x, std::span<const u64> w, const Modulus& modulus,
                                     ConvStyle style, std::size_t n) {
  if (style == ConvStyle::linear) {
    if (x.empty() || w.empty()) return {};
    std::vector<u64> out(x.size() + w.size() - 1, 0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] == 0) continue;
      for (std::size_t j = 0; j < w.size(); ++j) out[i + j] = modulus.add(out[i + j], modulus.mul(x[i], w[j]));
    }
    return out;
  }
  if (n == 0) n = std::max(x.size(), w.size());
  if (x.size() > n || w.size() > n) throw ParamError("operand longer than the convolution length");
  std::vector<u64> out(n, 0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] == 0) continue;
    for (std::size_t j = 0; j < w.size(); ++j) {
      if (w[j] == 0) continue;
      const u64 prod = modulus.mul(x[i], w[j]);
      const std::size_t k = i + j;
      if (k < n) {
        out[k] = modulus.add(out[k], prod);
      } else if (style == ConvStyle::cyclic) {
        out[k - n] = modulus.add(out[k - n], prod);
      } else {
        out[k - n] = modulus.sub(out[k - n], prod);
      }
    }
  }
  return out;
}

void pointwise_mul(std::span<u64> a, std::span<const u64> b, const Modulus& modulus) {
  if (a.size() != b.size()) throw ParamError("pointwise_mul length mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = modulus.mul(a[i], b[i]);
}

}  // namespace bunet
