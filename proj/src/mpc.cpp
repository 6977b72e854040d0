#include "bunet/mpc.hpp"

#include <cstring>

#include "bunet/bytes.hpp"

namespace bunet {

namespace {

void require_same_length(std::size_t a, std::size_t b) {
  if (a != b) throw ParamError("share length mismatch: " + std::to_string(a) + " vs " + std::to_string(b));
}

std::string segment_domain(CorrelationKind kind, u64 first) {
  return std::string(kind == CorrelationKind::triple ? "bunet.dealer.triple." : "bunet.dealer.ot.") +
         std::to_string(first);
}

}  // namespace

ShareVector share(std::span<const u64> x, const ShareVector& s_other, const Modulus& p) {
  require_same_length(x.size(), s_other.size());
  ShareVector out;
  out.owner = s_other.owner == Role::alice ? Role::bob : Role::alice;
  out.dims = s_other.dims;
  out.values.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] >= p.value() || s_other.values[i] >= p.value()) throw ParamError("share residue out of range");
    out.values[i] = p.sub(x[i], s_other.values[i]);
  }
  return out;
}

std::vector<u64> rec(const ShareVector& a, const ShareVector& b, const Modulus& p) {
  require_same_length(a.size(), b.size());
  std::vector<u64> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = p.add(a.values[i], b.values[i]);
  return out;
}

std::vector<i64> rec_signed(const ShareVector& a, const ShareVector& b, const Modulus& p) {
  auto r = rec(a, b, p);
  std::vector<i64> out(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) out[i] = p.to_signed(r[i]);
  return out;
}

std::vector<u64> random_vector(Prg& rng, std::size_t n, const Modulus& p) {
  std::vector<u64> v(n);
  rng.fill_uniform(v, p.value());
  return v;
}

Ciphertext hss_share(const Evaluator& ev, const Ciphertext& c, const PlainVector& s_b) { return ev.sub_plain(c, s_b); }

Ciphertext hss_rec(const Evaluator& ev, const Ciphertext& c, const PlainVector& s_b) { return ev.add_plain(c, s_b); }

Digest dealer_commitment(u64 seed) {
  ByteWriter w;
  w.tag("bunet.dealer.commit");
  w.u64v(seed);
  return sha256(w.data());
}

Dealer::Dealer(u64 seed, DealerBudget budget) : seed_(seed), budget_(budget), commitment_(dealer_commitment(seed)) {}

u64 Dealer::reserve(CorrelationKind kind, std::size_t count) {
  const std::size_t k = static_cast<std::size_t>(kind);
  if (used_[k] + count > budget_.limit[k]) {
    throw ResourceError(std::string("dealer budget exhausted for ") +
                        (kind == CorrelationKind::triple ? "triples" : "OT correlations"));
  }
  const u64 first = used_[k];
  used_[k] += count;
  return first;
}

std::pair<TripleShare, TripleShare> Dealer::triples(std::size_t count, const Modulus& p) {
  const u64 first = reserve(CorrelationKind::triple, count);
  Prg rng(derive_key(seed_, segment_domain(CorrelationKind::triple, first)));
  TripleShare ta, tb;
  ta.first_index = tb.first_index = first;
  ta.a.resize(count);
  ta.b.resize(count);
  ta.c.resize(count);
  tb.a.resize(count);
  tb.b.resize(count);
  tb.c.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const u64 a = rng.uniform(p.value()), b = rng.uniform(p.value());
    ta.a[i] = rng.uniform(p.value());
    ta.b[i] = rng.uniform(p.value());
    ta.c[i] = rng.uniform(p.value());
    tb.a[i] = p.sub(a, ta.a[i]);
    tb.b[i] = p.sub(b, ta.b[i]);
    tb.c[i] = p.sub(p.mul(a, b), ta.c[i]);
  }
  return {std::move(ta), std::move(tb)};
}

std::pair<OtSenderPad, OtReceiverPad> Dealer::ot(std::size_t count) {
  const u64 first = reserve(CorrelationKind::ot, count);
  Prg rng(derive_key(seed_, segment_domain(CorrelationKind::ot, first)));
  OtSenderPad s;
  OtReceiverPad r;
  s.r0.resize(count);
  s.r1.resize(count);
  r.choice.resize(count);
  r.rc.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    s.r0[i] = rng.next_block();
    s.r1[i] = rng.next_block();
    r.choice[i] = rng.next_bit() ? 1 : 0;
    r.rc[i] = r.choice[i] ? s.r1[i] : s.r0[i];
  }
  return {std::move(s), std::move(r)};
}

bool verify_triples(const TripleShare& alice, const TripleShare& bob, const Modulus& p) {
  if (alice.size() != bob.size()) return false;
  for (std::size_t i = 0; i < alice.size(); ++i) {
    const u64 a = p.add(alice.a[i], bob.a[i]);
    const u64 b = p.add(alice.b[i], bob.b[i]);
    const u64 c = p.add(alice.c[i], bob.c[i]);
    if (p.mul(a, b) != c) return false;
  }
  return true;
}

DealerTape::DealerTape(u64 seed, Role role, DealerBudget budget) : dealer_(seed, budget), role_(role) {}

TripleShare DealerTape::triples(std::size_t count, const Modulus& p) {
  auto [a, b] = dealer_.triples(count, p);
  return role_ == Role::alice ? std::move(a) : std::move(b);
}

OtSenderPad DealerTape::ot_sender(std::size_t count) {
  if (role_ != Role::alice) throw ParamError("only the garbler holds OT sender pads");
  return dealer_.ot(count).first;
}

OtReceiverPad DealerTape::ot_receiver(std::size_t count) {
  if (role_ != Role::bob) throw ParamError("only the evaluator holds OT receiver pads");
  return dealer_.ot(count).second;
}

std::vector<u8> DealerTape::save() const {
  ByteWriter w;
  w.tag("BUND");
  w.bytes(dealer_.commitment());
  w.u8v(static_cast<u8>(role_));
  for (std::size_t k = 0; k < kCorrelationKinds; ++k) w.u64v(dealer_.used(static_cast<CorrelationKind>(k)));
  return w.take();
}

DealerTape DealerTape::load(std::span<const u8> bytes, u64 seed, DealerBudget budget) {
  ByteReader r(bytes);
  r.expect_tag("BUND");
  auto commit = r.bytes(32);
  const Digest expected = dealer_commitment(seed);
  if (std::memcmp(commit.data(), expected.data(), 32) != 0)
    throw IntegrityError("dealer seed does not match the tape commitment");
  const u8 role = r.u8v();
  if (role > 1) throw FormatError("bad role byte in dealer tape");
  DealerTape tape(seed, static_cast<Role>(role), budget);
  for (std::size_t k = 0; k < kCorrelationKinds; ++k) tape.dealer_.set_used(static_cast<CorrelationKind>(k), r.u64v());
  r.expect_end();
  return tape;
}

BeaverOpening beaver_open(const ShareVector& x, const ShareVector& y, const TripleShare& t, const Modulus& p) {
  require_same_length(x.size(), y.size());
  require_same_length(x.size(), t.size());
  if (t.consumed) throw ProtocolAbort("Beaver triple batch " + std::to_string(t.first_index) + " already consumed");
  BeaverOpening o;
  o.d.resize(x.size());
  o.e.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    o.d[i] = p.sub(x.values[i], t.a[i]);
    o.e[i] = p.sub(y.values[i], t.b[i]);
  }
  return o;
}

ShareVector beaver_close(Role role, std::span<const u64> d, std::span<const u64> e, TripleShare& t,
                         const Modulus& p) {
  require_same_length(d.size(), t.size());
  require_same_length(e.size(), t.size());
  if (t.consumed) throw ProtocolAbort("Beaver triple batch " + std::to_string(t.first_index) + " already consumed");
  t.consumed = true;
  ShareVector g;
  g.owner = role;
  g.values.resize(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    u64 v = p.add(t.c[i], p.mul(e[i], t.a[i]));
    v = p.add(v, p.mul(d[i], t.b[i]));
    if (role == Role::alice) v = p.add(v, p.mul(d[i], e[i]));
    g.values[i] = v;
  }
  return g;
}

std::pair<ShareVector, ShareVector> beaver_hadamard_local(const ShareVector& x_a, const ShareVector& x_b,
                                                          const ShareVector& y_a, const ShareVector& y_b,
                                                          TripleShare& t_a, TripleShare& t_b, const Modulus& p,
                                                          BeaverTrace* trace) {
  const BeaverOpening oa = beaver_open(x_a, y_a, t_a, p);
  const BeaverOpening ob = beaver_open(x_b, y_b, t_b, p);
  std::vector<u64> d(oa.d.size()), e(oa.e.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    d[i] = p.add(oa.d[i], ob.d[i]);
    e[i] = p.add(oa.e[i], ob.e[i]);
  }
  auto ga = beaver_close(Role::alice, d, e, t_a, p);
  auto gb = beaver_close(Role::bob, d, e, t_b, p);
  ga.dims = x_a.dims;
  gb.dims = x_b.dims;
  if (trace) {
    trace->d = std::move(d);
    trace->e = std::move(e);
  }
  return {std::move(ga), std::move(gb)};
}

u64 trunc_bias(u64 bound, int f) {
  const u64 unit = 1ULL << f;
  return (bound + unit / 2 + unit - 1) / unit * unit;
}

BobTruncation prob_trunc_bob(const ShareVector& x_b, int f, u64 bias, const Modulus& p, Prg& rng) {
  if (f < 0 || f > 40) throw ParamError("truncation shift out of range");
  if (bias % (1ULL << f) != 0) throw ParamError("truncation bias must be a multiple of 2^f");
  if (2 * bias >= p.value()) throw ParamError("truncation bias leaves no room below p");
  const u64 range = p.value() - 2 * bias;
  BobTruncation t;
  t.out.owner = Role::bob;
  t.out.dims = x_b.dims;
  t.out.values.resize(x_b.size());
  t.rho.resize(x_b.size());
  for (std::size_t i = 0; i < x_b.size(); ++i) {
    const u64 nb = rng.uniform(range);
    t.rho[i] = p.add(x_b.values[i], nb);
    t.out.values[i] = p.neg(nb >> f);
  }
  return t;
}

ShareVector prob_trunc_alice(const ShareVector& x_a, std::span<const u64> rho, int f, u64 bias, const Modulus& p) {
  require_same_length(x_a.size(), rho.size());
  ShareVector out;
  out.owner = Role::alice;
  out.dims = x_a.dims;
  out.values.resize(x_a.size());
  // the half-unit offset centers the rounding error on the floor
  const u64 b = (bias - (1ULL << f >> 1)) % p.value();
  for (std::size_t i = 0; i < x_a.size(); ++i) {
    // z = x - 2^(f-1) + B + n_B as an integer in [0, p)
    const u64 z = p.add(p.add(x_a.values[i], rho[i]), b);
    out.values[i] = p.sub(z >> f, bias >> f);
  }
  return out;
}

}  // namespace bunet
