#include "bunet/pahe.hpp"

#include <bit>
#include <cmath>

#include "bunet/bytes.hpp"

namespace bunet {

namespace {

constexpr int kCbdK = 21;  // noise is centered binomial, |e| <= 21

i64 sample_cbd(Prg& rng) {
  const u64 r = rng.next_u64();
  const u64 mask = (1ULL << kCbdK) - 1;
  return static_cast<i64>(std::popcount(r & mask)) - static_cast<i64>(std::popcount((r >> kCbdK) & mask));
}

std::vector<u64> sample_noise(Prg& rng, const Modulus& q, std::size_t n) {
  std::vector<u64> e(n);
  for (auto& x : e) x = q.from_signed(sample_cbd(rng));
  return e;
}

std::vector<u64> sample_ternary(Prg& rng, const Modulus& q, std::size_t n) {
  std::vector<u64> s(n);
  for (auto& x : s) x = q.from_signed(static_cast<i64>(rng.uniform(3)) - 1);
  return s;
}

std::vector<u64> to_eval(std::vector<u64> v, const NttTables& t) {
  t.forward_negacyclic_bitrev(v);
  return v;
}

// log2(2^a + 2^b)
double log_add(double a, double b) {
  const double hi = std::max(a, b), lo = std::min(a, b);
  return hi + std::log2(1.0 + std::exp2(lo - hi));
}

double log_add_value(double a, double v) { return v <= 0 ? a : log_add(a, std::log2(v)); }

void require_layout(Encoding layout, Encoding plain) {
  if (layout != plain) throw ParamError("plaintext encoding does not match the ciphertext layout");
}

}  // namespace

BatchEncoder::BatchEncoder(const RingParams& params) : params_(params) {
  const std::size_t n = params.n();
  const std::size_t half = n / 2;
  slot_index_.resize(n);
  u64 e = 1;
  for (std::size_t j = 0; j < half; ++j) {
    slot_index_[j] = static_cast<u32>((e - 1) / 2);
    slot_index_[half + j] = static_cast<u32>((2 * n - e - 1) / 2);
    e = e * 3 % (2 * n);
  }
}

std::vector<u64> BatchEncoder::to_poly(const PlainVector& v) const {
  const std::size_t n = params_.n();
  if (v.values.size() != n) throw ParamError("plaintext must have exactly n slots");
  for (u64 x : v.values)
    if (x >= params_.p().value()) throw ParamError("plaintext residue out of range");
  if (v.encoding == Encoding::coefficients) return v.values;
  std::vector<u64> eval = spectrum_from_slots_unchecked(v.values);
  params_.tables(ModulusId::p).inverse(eval, NttStyle::negacyclic);
  return eval;
}

PlainVector BatchEncoder::from_poly(std::span<const u64> poly, Encoding encoding) const {
  if (poly.size() != params_.n()) throw ParamError("plaintext polynomial must have n coefficients");
  PlainVector out;
  out.encoding = encoding;
  if (encoding == Encoding::coefficients) {
    out.values.assign(poly.begin(), poly.end());
    return out;
  }
  std::vector<u64> eval(poly.begin(), poly.end());
  params_.tables(ModulusId::p).forward(eval, NttStyle::negacyclic);
  out.values = spectrum_to_slots(eval);
  return out;
}

std::vector<u64> BatchEncoder::spectrum_to_slots(std::span<const u64> spectrum) const {
  if (spectrum.size() != params_.n()) throw ParamError("spectrum must have n entries");
  std::vector<u64> slots(params_.n());
  for (std::size_t s = 0; s < slots.size(); ++s) slots[s] = spectrum[slot_index_[s]];
  return slots;
}

std::vector<u64> BatchEncoder::slots_to_spectrum(std::span<const u64> slots) const {
  if (slots.size() != params_.n()) throw ParamError("slot vector must have n entries");
  return spectrum_from_slots_unchecked(slots);
}

std::vector<u64> BatchEncoder::spectrum_from_slots_unchecked(std::span<const u64> slots) const {
  std::vector<u64> spectrum(params_.n());
  for (std::size_t s = 0; s < slots.size(); ++s) spectrum[slot_index_[s]] = slots[s];
  return spectrum;
}

u64 BatchEncoder::rotation_element(std::size_t k) const {
  const u64 two_n = 2 * params_.n();
  u64 g = 1;
  for (std::size_t i = 0; i < k; ++i) g = g * 3 % two_n;
  return g;
}

std::vector<u64> apply_automorphism(std::span<const u64> poly, u64 g, const Modulus& m) {
  const std::size_t n = poly.size();
  const u64 two_n = 2 * n;
  std::vector<u64> out(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const u64 j = static_cast<u64>(i) * g % two_n;
    if (j < n) {
      out[j] = poly[i];
    } else {
      out[j - n] = m.neg(poly[i]);
    }
  }
  return out;
}

KeyMaterial keygen(const RingParams& params, const std::set<std::size_t>& rotation_steps, u64 seed,
                   KeygenOptions options) {
  if (options.base_bits < 1 || options.base_bits > 30) throw ParamError("key-switching base must be 2^1..2^30");
  const std::size_t n = params.n();
  const Modulus& q = params.q();
  const NttTables& tq = params.tables(ModulusId::q);
  BatchEncoder encoder(params);
  Prg rng(seed, "bunet.keygen");

  KeyMaterial km;
  km.sk.s = ModPoly{sample_ternary(rng, q, n), PolyDomain::coefficient, ModulusId::q};
  km.sk.s_eval = to_eval(km.sk.s.coeffs, tq);

  {
    std::vector<u64> a(n);
    rng.fill_uniform(a, q.value());
    std::vector<u64> e = to_eval(sample_noise(rng, q, n), tq);
    std::vector<u64> p0(n);
    for (std::size_t i = 0; i < n; ++i) p0[i] = q.add(q.neg(q.mul(a[i], km.sk.s_eval[i])), e[i]);
    km.pk.p0_eval = std::move(p0);
    km.pk.p1_eval = std::move(a);
  }

  RotationKeySet& rk = km.rotations;
  rk.base_bits = options.base_bits;
  rk.row_swap = options.row_swap;
  const std::size_t digits = rk.digit_count(q);

  auto make_ksk = [&](u64 g) {
    const std::vector<u64> sg = to_eval(apply_automorphism(km.sk.s.coeffs, g, q), tq);
    KeySwitchKey ksk;
    u64 power = 1;
    for (std::size_t d = 0; d < digits; ++d) {
      std::vector<u64> a(n);
      rng.fill_uniform(a, q.value());
      std::vector<u64> e = to_eval(sample_noise(rng, q, n), tq);
      std::vector<u64> k0(n);
      for (std::size_t i = 0; i < n; ++i) {
        u64 v = q.neg(q.mul(a[i], km.sk.s_eval[i]));
        v = q.add(v, e[i]);
        v = q.add(v, q.mul(power, sg[i]));
        k0[i] = v;
      }
      ksk.k0.push_back(std::move(k0));
      ksk.k1.push_back(std::move(a));
      power = q.mul(power, (1ULL << options.base_bits) % q.value());
    }
    return ksk;
  };

  for (std::size_t step : rotation_steps) {
    if (step >= n / 2) throw ParamError("rotation step must be below n/2 (rows rotate independently)");
    rk.steps.insert(step);
    if (step == 0) continue;
    const u64 g = encoder.rotation_element(step);
    if (!rk.keys.count(g)) rk.keys.emplace(g, make_ksk(g));
  }
  if (options.row_swap) rk.keys.emplace(encoder.row_swap_element(), make_ksk(encoder.row_swap_element()));
  return km;
}

Encryptor::Encryptor(const RingParams& params, const SecretKey& sk) : encoder_(params), sk_(&sk) {}
Encryptor::Encryptor(const RingParams& params, const PublicKey& pk) : encoder_(params), pk_(&pk) {}

Ciphertext Encryptor::encrypt(const PlainVector& v, Prg& rng) const {
  return encrypt_poly(encoder_.to_poly(v), v.encoding, rng);
}

Ciphertext Encryptor::encrypt_zero(Encoding layout, Prg& rng) const {
  return encrypt_poly(std::vector<u64>(encoder_.params().n(), 0), layout, rng);
}

Ciphertext Encryptor::encrypt_poly(std::span<const u64> m, Encoding layout, Prg& rng) const {
  const RingParams& rp = encoder_.params();
  const std::size_t n = rp.n();
  const Modulus& q = rp.q();
  const NttTables& tq = rp.tables(ModulusId::q);
  const u64 delta = q.value() / rp.p().value();

  Ciphertext ct;
  ct.layout = layout;
  std::vector<u64> c0(n), c1(n);
  if (sk_) {
    std::vector<u64> a(n);
    rng.fill_uniform(a, q.value());
    for (std::size_t i = 0; i < n; ++i) c0[i] = q.neg(q.mul(a[i], sk_->s_eval[i]));
    tq.inverse_negacyclic_bitrev(c0);
    tq.inverse_negacyclic_bitrev(a);
    c1 = std::move(a);
    for (std::size_t i = 0; i < n; ++i) c0[i] = q.add(c0[i], q.from_signed(sample_cbd(rng)));
    ct.noise_bits = std::log2(static_cast<double>(kCbdK));
  } else {
    std::vector<u64> u = to_eval(sample_ternary(rng, q, n), tq);
    for (std::size_t i = 0; i < n; ++i) {
      c0[i] = q.mul(pk_->p0_eval[i], u[i]);
      c1[i] = q.mul(pk_->p1_eval[i], u[i]);
    }
    tq.inverse_negacyclic_bitrev(c0);
    tq.inverse_negacyclic_bitrev(c1);
    for (std::size_t i = 0; i < n; ++i) {
      c0[i] = q.add(c0[i], q.from_signed(sample_cbd(rng)));
      c1[i] = q.add(c1[i], q.from_signed(sample_cbd(rng)));
    }
    ct.noise_bits = std::log2(static_cast<double>(kCbdK) * (2.0 * static_cast<double>(n) + 1.0));
  }
  for (std::size_t i = 0; i < n; ++i) c0[i] = q.add(c0[i], q.mul(delta, m[i]));
  ct.c0 = ModPoly{std::move(c0), PolyDomain::coefficient, ModulusId::q};
  ct.c1 = ModPoly{std::move(c1), PolyDomain::coefficient, ModulusId::q};
  return ct;
}

Decryptor::Decryptor(const RingParams& params, const SecretKey& sk) : encoder_(params), sk_(sk) {}

std::vector<u64> Decryptor::phase(const Ciphertext& ct) const {
  const RingParams& rp = encoder_.params();
  const Modulus& q = rp.q();
  const NttTables& tq = rp.tables(ModulusId::q);
  const std::size_t n = rp.n();
  if (ct.c0.coeffs.size() != n || ct.c1.coeffs.size() != n) throw ParamError("ciphertext degree mismatch");
  std::vector<u64> x = ct.c1.coeffs;
  if (ct.domain() == PolyDomain::coefficient) tq.forward_negacyclic_bitrev(x);
  for (std::size_t i = 0; i < n; ++i) x[i] = q.mul(x[i], sk_.s_eval[i]);
  if (ct.domain() == PolyDomain::evaluation) {
    for (std::size_t i = 0; i < n; ++i) x[i] = q.add(x[i], ct.c0.coeffs[i]);
    tq.inverse_negacyclic_bitrev(x);
  } else {
    tq.inverse_negacyclic_bitrev(x);
    for (std::size_t i = 0; i < n; ++i) x[i] = q.add(x[i], ct.c0.coeffs[i]);
  }
  return x;
}

PlainVector Decryptor::decrypt(const Ciphertext& ct) const {
  const RingParams& rp = encoder_.params();
  const u64 q = rp.q().value(), p = rp.p().value();
  std::vector<u64> x = phase(ct);
  for (auto& v : x) {
    const u128 num = static_cast<u128>(v) * p + q / 2;
    v = static_cast<u64>(num / q) % p;
  }
  return encoder_.from_poly(x, ct.layout);
}

double Decryptor::measure_noise(const Ciphertext& ct) const {
  const RingParams& rp = encoder_.params();
  const Modulus& q = rp.q();
  const u64 p = rp.p().value();
  const u64 delta = q.value() / p;
  std::vector<u64> x = phase(ct);
  i64 worst = 0;
  for (u64 v : x) {
    const u64 m = static_cast<u64>((static_cast<u128>(v) * p + q.value() / 2) / q.value()) % p;
    const i64 e = q.to_signed(q.sub(v, q.mul(delta, m)));
    worst = std::max(worst, e < 0 ? -e : e);
  }
  return worst == 0 ? 0.0 : std::log2(static_cast<double>(worst));
}

Evaluator::Evaluator(const RingParams& params) : encoder_(params), delta_(params.q().value() / params.p().value()) {}

void Evaluator::to_eval(Ciphertext& c) const {
  if (c.domain() == PolyDomain::evaluation) return;
  const NttTables& tq = params().tables(ModulusId::q);
  tq.forward_negacyclic_bitrev(c.c0.coeffs);
  tq.forward_negacyclic_bitrev(c.c1.coeffs);
  c.c0.domain = c.c1.domain = PolyDomain::evaluation;
}

void Evaluator::to_coeff(Ciphertext& c) const {
  if (c.domain() == PolyDomain::coefficient) return;
  const NttTables& tq = params().tables(ModulusId::q);
  tq.inverse_negacyclic_bitrev(c.c0.coeffs);
  tq.inverse_negacyclic_bitrev(c.c1.coeffs);
  c.c0.domain = c.c1.domain = PolyDomain::coefficient;
}

void Evaluator::add_inplace(Ciphertext& a, const Ciphertext& b) const {
  if (a.layout != b.layout) throw ParamError("cannot combine ciphertexts with different slot layouts");
  if (a.c0.coeffs.size() != params().n() || b.c0.coeffs.size() != params().n())
    throw ParamError("ciphertext degree mismatch");
  const Modulus& q = params().q();
  const Ciphertext* src = &b;
  Ciphertext converted;
  if (b.domain() != a.domain()) {
    converted = b;
    if (a.domain() == PolyDomain::evaluation) {
      to_eval(converted);
    } else {
      to_coeff(converted);
    }
    src = &converted;
  }
  for (std::size_t i = 0; i < params().n(); ++i) {
    a.c0.coeffs[i] = q.add(a.c0.coeffs[i], src->c0.coeffs[i]);
    a.c1.coeffs[i] = q.add(a.c1.coeffs[i], src->c1.coeffs[i]);
  }
  a.noise_bits = log_add_value(log_add(a.noise_bits, b.noise_bits), static_cast<double>(q.value() % params().p().value()));
}

Ciphertext Evaluator::add(const Ciphertext& a, const Ciphertext& b) const {
  Ciphertext out = a;
  add_inplace(out, b);
  return out;
}

Ciphertext Evaluator::sub(const Ciphertext& a, const Ciphertext& b) const {
  Ciphertext neg = b;
  const Modulus& q = params().q();
  for (auto& x : neg.c0.coeffs) x = q.neg(x);
  for (auto& x : neg.c1.coeffs) x = q.neg(x);
  Ciphertext out = a;
  add_inplace(out, neg);
  return out;
}

void Evaluator::add_scaled_plain(Ciphertext& c, const PlainVector& v, bool negate) const {
  require_layout(c.layout, v.encoding);
  const Modulus& q = params().q();
  std::vector<u64> m = encoder_.to_poly(v);
  for (auto& x : m) {
    x = q.mul(delta_, x);
    if (negate) x = q.neg(x);
  }
  if (c.domain() == PolyDomain::evaluation) params().tables(ModulusId::q).forward_negacyclic_bitrev(m);
  for (std::size_t i = 0; i < m.size(); ++i) c.c0.coeffs[i] = q.add(c.c0.coeffs[i], m[i]);
  c.noise_bits = log_add_value(c.noise_bits, static_cast<double>(q.value() % params().p().value()));
}

Ciphertext Evaluator::add_plain(const Ciphertext& c, const PlainVector& v) const {
  Ciphertext out = c;
  add_scaled_plain(out, v, false);
  return out;
}

Ciphertext Evaluator::sub_plain(const Ciphertext& c, const PlainVector& v) const {
  Ciphertext out = c;
  add_scaled_plain(out, v, true);
  return out;
}

MulOperand Evaluator::prepare(const PlainVector& w) const {
  const Modulus& q = params().q();
  const u64 p = params().p().value();
  std::vector<u64> poly = encoder_.to_poly(w);
  MulOperand op;
  op.encoding = w.encoding;
  for (auto& x : poly) {
    if (x > p / 2) {
      op.l1 += static_cast<double>(p - x);
      x = q.value() - (p - x);
    } else {
      op.l1 += static_cast<double>(x);
    }
  }
  params().tables(ModulusId::q).forward_negacyclic_bitrev(poly);
  op.eval = std::move(poly);
  return op;
}

Ciphertext Evaluator::mul_plain(const Ciphertext& c, const PlainVector& w) const { return mul_plain(c, prepare(w)); }

Ciphertext Evaluator::mul_plain(const Ciphertext& c, const MulOperand& w) const {
  require_layout(c.layout, w.encoding);
  Ciphertext out = c;
  to_eval(out);
  pointwise_mul(out.c0.coeffs, w.eval, params().q());
  pointwise_mul(out.c1.coeffs, w.eval, params().q());
  const double r = static_cast<double>(params().q().value() % params().p().value());
  out.noise_bits = w.l1 == 0 ? 0.0 : log_add_value(c.noise_bits + std::log2(w.l1), r * (w.l1 + 1));
  return out;
}

void Evaluator::mul_plain_accumulate(Ciphertext& acc, const Ciphertext& a, const MulOperand& w) const {
  if (acc.c0.coeffs.empty()) {
    acc = mul_plain(a, w);
    return;
  }
  require_layout(a.layout, w.encoding);
  if (acc.domain() != PolyDomain::evaluation || a.domain() != PolyDomain::evaluation)
    throw ParamError("mul_plain_accumulate works in evaluation form");
  const Modulus& q = params().q();
  for (std::size_t i = 0; i < params().n(); ++i) {
    acc.c0.coeffs[i] = q.add(acc.c0.coeffs[i], q.mul(a.c0.coeffs[i], w.eval[i]));
    acc.c1.coeffs[i] = q.add(acc.c1.coeffs[i], q.mul(a.c1.coeffs[i], w.eval[i]));
  }
  const double r = static_cast<double>(q.value() % params().p().value());
  if (w.l1 > 0) acc.noise_bits = log_add(acc.noise_bits, log_add_value(a.noise_bits + std::log2(w.l1), r * (w.l1 + 1)));
}

Ciphertext Evaluator::apply_galois(const Ciphertext& c, u64 g, const RotationKeySet& keys) const {
  auto it = keys.keys.find(g);
  if (it == keys.keys.end()) throw ResourceError("no key-switching key for Galois element " + std::to_string(g));
  const KeySwitchKey& ksk = it->second;
  const Modulus& q = params().q();
  const NttTables& tq = params().tables(ModulusId::q);
  const std::size_t n = params().n();

  Ciphertext src = c;
  to_coeff(src);
  std::vector<u64> c0 = apply_automorphism(src.c0.coeffs, g, q);
  const std::vector<u64> c1 = apply_automorphism(src.c1.coeffs, g, q);
  tq.forward_negacyclic_bitrev(c0);
  std::vector<u64> acc1(n, 0);
  const std::size_t digits = ksk.k0.size();
  const u64 mask = (1ULL << keys.base_bits) - 1;
  std::vector<u64> d(n);
  for (std::size_t k = 0; k < digits; ++k) {
    const int shift = static_cast<int>(k) * keys.base_bits;
    for (std::size_t i = 0; i < n; ++i) d[i] = (c1[i] >> shift) & mask;
    tq.forward_negacyclic_bitrev(d);
    for (std::size_t i = 0; i < n; ++i) {
      c0[i] = q.add(c0[i], q.mul(d[i], ksk.k0[k][i]));
      acc1[i] = q.add(acc1[i], q.mul(d[i], ksk.k1[k][i]));
    }
  }
  Ciphertext out;
  out.layout = c.layout;
  out.c0 = ModPoly{std::move(c0), PolyDomain::evaluation, ModulusId::q};
  out.c1 = ModPoly{std::move(acc1), PolyDomain::evaluation, ModulusId::q};
  const double ks = static_cast<double>(digits) * static_cast<double>(n) * static_cast<double>(mask) * kCbdK;
  out.noise_bits = log_add_value(c.noise_bits, ks);
  return out;
}

Ciphertext Evaluator::rot(const Ciphertext& c, std::size_t k, const RotationKeySet& keys) const {
  if (c.layout != Encoding::slots) throw ParamError("rotation needs a slot-encoded ciphertext");
  if (k >= params().n() / 2) throw ParamError("rotation step must be below n/2");
  if (k == 0) return c;
  if (!keys.steps.count(k)) throw ResourceError("rotation step " + std::to_string(k) + " was not declared at keygen");
  return apply_galois(c, encoder_.rotation_element(k), keys);
}

Ciphertext Evaluator::swap_rows(const Ciphertext& c, const RotationKeySet& keys) const {
  if (c.layout != Encoding::slots) throw ParamError("row swap needs a slot-encoded ciphertext");
  if (!keys.row_swap) throw ResourceError("row swap key was not generated");
  return apply_galois(c, encoder_.row_swap_element(), keys);
}

double Evaluator::noise_budget(const Ciphertext& c) const {
  return std::log2(static_cast<double>(delta_) / 2.0) - c.noise_bits;
}

std::vector<u8> serialize(const Ciphertext& ct, const RingParams& params) {
  Ciphertext c = ct;
  Evaluator(params).to_coeff(c);
  ByteWriter w;
  w.tag("BUN1");
  w.u32v(static_cast<u32>(params.n()));
  w.u8v(static_cast<u8>(ModulusId::q));
  w.u8v(static_cast<u8>(ModulusId::p));
  w.u8v(static_cast<u8>(c.layout));
  w.u8v(0);
  const double nb = std::clamp(c.noise_bits, 0.0, 255.0);
  w.u16v(static_cast<std::uint16_t>(std::ceil(nb * 256.0)));
  w.words(c.c0.coeffs);
  w.words(c.c1.coeffs);
  return w.take();
}

Ciphertext deserialize_ciphertext(std::span<const u8> bytes, const RingParams& params) {
  ByteReader r(bytes);
  r.expect_tag("BUN1");
  if (r.u32v() != params.n()) throw FormatError("ciphertext degree does not match parameters");
  if (r.u8v() != static_cast<u8>(ModulusId::q) || r.u8v() != static_cast<u8>(ModulusId::p))
    throw FormatError("unexpected modulus ids in ciphertext header");
  const u8 layout = r.u8v();
  if (layout > 1) throw FormatError("unknown slot layout tag");
  if (r.u8v() != 0) throw FormatError("reserved header byte must be zero");
  Ciphertext ct;
  ct.layout = static_cast<Encoding>(layout);
  ct.noise_bits = r.u16v() / 256.0;
  ct.c0 = ModPoly{r.words(params.n()), PolyDomain::coefficient, ModulusId::q};
  ct.c1 = ModPoly{r.words(params.n()), PolyDomain::coefficient, ModulusId::q};
  r.expect_end();
  const u64 q = params.q().value();
  for (u64 x : ct.c0.coeffs)
    if (x >= q) throw FormatError("ciphertext coefficient out of range");
  for (u64 x : ct.c1.coeffs)
    if (x >= q) throw FormatError("ciphertext coefficient out of range");
  return ct;
}

std::vector<u8> serialize(const RotationKeySet& keys, const RingParams& params) {
  ByteWriter w;
  w.tag("BUNR");
  w.u32v(static_cast<u32>(params.n()));
  w.u8v(static_cast<u8>(keys.base_bits));
  w.u8v(keys.row_swap ? 1 : 0);
  w.u32v(static_cast<u32>(keys.steps.size()));
  for (std::size_t s : keys.steps) w.u32v(static_cast<u32>(s));
  w.u32v(static_cast<u32>(keys.keys.size()));
  for (const auto& [g, ksk] : keys.keys) {
    w.u64v(g);
    w.u32v(static_cast<u32>(ksk.k0.size()));
    for (const auto& k : ksk.k0) w.words(k);
    for (const auto& k : ksk.k1) w.words(k);
  }
  return w.take();
}

RotationKeySet deserialize_rotation_keys(std::span<const u8> bytes, const RingParams& params) {
  ByteReader r(bytes);
  r.expect_tag("BUNR");
  if (r.u32v() != params.n()) throw FormatError("rotation keys do not match parameters");
  RotationKeySet keys;
  keys.base_bits = r.u8v();
  if (keys.base_bits < 1 || keys.base_bits > 30) throw FormatError("bad key-switching base");
  keys.row_swap = r.u8v() != 0;
  const u32 nsteps = r.u32v();
  for (u32 i = 0; i < nsteps; ++i) keys.steps.insert(r.u32v());
  const u32 nkeys = r.u32v();
  const std::size_t digits = keys.digit_count(params.q());
  for (u32 i = 0; i < nkeys; ++i) {
    const u64 g = r.u64v();
    if (r.u32v() != digits) throw FormatError("unexpected digit count in rotation key");
    KeySwitchKey ksk;
    for (std::size_t d = 0; d < digits; ++d) ksk.k0.push_back(r.words(params.n()));
    for (std::size_t d = 0; d < digits; ++d) ksk.k1.push_back(r.words(params.n()));
    keys.keys.emplace(g, std::move(ksk));
  }
  r.expect_end();
  return keys;
}

}  // namespace bunet
