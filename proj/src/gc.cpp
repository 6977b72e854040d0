#include "bunet/gc.hpp"

#include <bit>

#include "bunet/bytes.hpp"

namespace bunet {

Digest BoolCircuit::hash() const {
  ByteWriter w;
  w.tag("bunet.circuit");
  w.u32v(wire_count);
  w.u32v(static_cast<u32>(gates.size()));
  for (const Gate& g : gates) {
    w.u8v(static_cast<u8>(g.kind));
    w.u32v(g.a);
    w.u32v(g.b);
    w.u32v(g.out);
  }
  for (const auto* list : {&garbler_inputs, &evaluator_inputs, &outputs}) {
    w.u32v(static_cast<u32>(list->size()));
    for (u32 x : *list) w.u32v(x);
  }
  return sha256(w.data());
}

std::vector<u8> evaluate_plain(const BoolCircuit& c, std::span<const u8> garbler_bits,
                               std::span<const u8> evaluator_bits) {
  if (garbler_bits.size() != c.garbler_inputs.size() || evaluator_bits.size() != c.evaluator_inputs.size())
    throw ParamError("input arity does not match the circuit");
  std::vector<u8> v(c.wire_count, 0);
  v[0] = 1;
  for (std::size_t i = 0; i < garbler_bits.size(); ++i) v[c.garbler_inputs[i]] = garbler_bits[i] & 1;
  for (std::size_t i = 0; i < evaluator_bits.size(); ++i) v[c.evaluator_inputs[i]] = evaluator_bits[i] & 1;
  for (const Gate& g : c.gates) v[g.out] = g.kind == GateKind::xor_gate ? (v[g.a] ^ v[g.b]) : (v[g.a] & v[g.b]);
  std::vector<u8> out(c.outputs.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[c.outputs[i]];
  return out;
}

CircuitBuilder::Word CircuitBuilder::garbler_input(std::size_t bits) {
  Word w(bits);
  for (auto& b : w) {
    b.v = c_.wire_count++;
    c_.garbler_inputs.push_back(b.v);
  }
  return w;
}

CircuitBuilder::Word CircuitBuilder::evaluator_input(std::size_t bits) {
  Word w(bits);
  for (auto& b : w) {
    b.v = c_.wire_count++;
    c_.evaluator_inputs.push_back(b.v);
  }
  return w;
}

u32 CircuitBuilder::materialize(Bit b) {
  if (b.v == kConst1) return 0;
  if (b.v == kConst0) {
    const u32 out = c_.wire_count++;
    c_.gates.push_back({GateKind::xor_gate, 0, 0, out});
    return out;
  }
  return b.v;
}

void CircuitBuilder::output(Bit b) { c_.outputs.push_back(materialize(b)); }

void CircuitBuilder::output(const Word& w) {
  for (Bit b : w) output(b);
}

CircuitBuilder::Bit CircuitBuilder::xor_(Bit a, Bit b) {
  if (a.v == kConst0) return b;
  if (b.v == kConst0) return a;
  if (is_const(a) && is_const(b)) return zero();  // 1 ^ 1
  if (a == b) return zero();
  const u32 wa = materialize(a), wb = materialize(b);
  const u32 out = c_.wire_count++;
  c_.gates.push_back({GateKind::xor_gate, wa, wb, out});
  return Bit{out};
}

CircuitBuilder::Bit CircuitBuilder::and_(Bit a, Bit b) {
  if (a.v == kConst0 || b.v == kConst0) return zero();
  if (a.v == kConst1) return b;
  if (b.v == kConst1) return a;
  if (a == b) return a;
  const u32 out = c_.wire_count++;
  c_.gates.push_back({GateKind::and_gate, a.v, b.v, out});
  ++c_.and_count;
  return Bit{out};
}

CircuitBuilder::Word CircuitBuilder::constant(u64 value, std::size_t bits) const {
  Word w(bits);
  for (std::size_t i = 0; i < bits; ++i) w[i] = (i < 64 && ((value >> i) & 1)) ? one() : zero();
  return w;
}

CircuitBuilder::Word CircuitBuilder::mux(Bit s, const Word& x, const Word& y) {
  if (x.size() != y.size()) throw ParamError("mux width mismatch");
  Word out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = mux(s, x[i], y[i]);
  return out;
}

std::pair<CircuitBuilder::Word, CircuitBuilder::Bit> CircuitBuilder::add(const Word& a, const Word& b, Bit carry_in) {
  const std::size_t w = std::max(a.size(), b.size());
  Word s(w);
  Bit c = carry_in;
  for (std::size_t i = 0; i < w; ++i) {
    const Bit x = i < a.size() ? a[i] : zero();
    const Bit y = i < b.size() ? b[i] : zero();
    s[i] = xor_(xor_(x, y), c);
    c = xor_(c, and_(xor_(x, c), xor_(y, c)));
  }
  return {std::move(s), c};
}

std::pair<CircuitBuilder::Word, CircuitBuilder::Bit> CircuitBuilder::sub(const Word& a, const Word& b) {
  const std::size_t w = std::max(a.size(), b.size());
  Word nb(w);
  for (std::size_t i = 0; i < w; ++i) nb[i] = not_(i < b.size() ? b[i] : zero());
  return add(a, nb, one());
}

CircuitBuilder::Bit CircuitBuilder::lt_signed(const Word& a, const Word& b) {
  if (a.size() != b.size() || a.empty()) throw ParamError("signed compare needs equal non-empty widths");
  Word ax = a, bx = b;
  ax.push_back(a.back());
  bx.push_back(b.back());
  return sub(ax, bx).first.back();
}

BoolCircuit CircuitBuilder::build() { return std::move(c_); }

int bit_width_for(u64 p) { return std::bit_width(p - 1); }

namespace circuits {

namespace {

using Word = CircuitBuilder::Word;
using Bit = CircuitBuilder::Bit;

void check_width(int k, u64 p) {
  if (p < 3 || k < bit_width_for(p)) throw ParamError("bit width " + std::to_string(k) + " too small for modulus " + std::to_string(p));
  if (k > 62) throw ParamError("bit width too large");
}

// (a + b) mod p for residues, k bits.
Word add_mod(CircuitBuilder& cb, const Word& a, const Word& b, u64 p, int k) {
  auto [t, carry] = cb.add(a, b);
  t.push_back(carry);
  auto [u, ge] = cb.sub(t, cb.constant(p, k + 1));
  Word r = cb.mux(ge, u, t);
  r.resize(k);
  return r;
}

// (a - b) mod p for residues, k bits.
Word sub_mod(CircuitBuilder& cb, const Word& a, const Word& b, u64 p, int k) {
  auto [d, no_borrow] = cb.sub(a, b);
  auto [e, unused] = cb.add(d, cb.constant(p, k));
  (void)unused;
  return cb.mux(no_borrow, d, e);
}

Bit is_negative(CircuitBuilder& cb, const Word& t, u64 p, int k) {
  return cb.ge_unsigned(t, cb.constant((p + 1) / 2, k));
}

// Residue -> (k+1)-bit two's complement of its signed representative.
Word to_signed(CircuitBuilder& cb, const Word& t, u64 p, int k) {
  const Bit neg = is_negative(cb, t, p, k);
  Word te = t;
  te.push_back(CircuitBuilder::zero());
  Word d = cb.sub(te, cb.constant(p, k + 1)).first;
  return cb.mux(neg, d, te);
}

Word from_signed(CircuitBuilder& cb, const Word& s, u64 p, int k) {
  Word plus = cb.add(s, cb.constant(p, k + 1)).first;
  Word r = cb.mux(s.back(), plus, s);
  r.resize(k);
  return r;
}

}  // namespace

BoolCircuit relu_reshare(int k, u64 p, int f, u64 clamp) {
  check_width(k, p);
  if (f < 0 || f >= k) throw ParamError("shift out of range");
  CircuitBuilder cb;
  const Word a = cb.garbler_input(k);
  const Word b = cb.evaluator_input(k);
  const Word r = cb.evaluator_input(k);
  const Word t = add_mod(cb, a, b, p, k);
  const Bit keep = cb.not_(is_negative(cb, t, p, k));
  Word v(k, CircuitBuilder::zero());
  for (int i = f; i < k; ++i) v[i - f] = cb.and_(t[i], keep);
  if (clamp > 0) {
    const Word cw = cb.constant(clamp, k);
    const Bit over = cb.ge_unsigned(v, cb.constant(clamp + 1, k));
    v = cb.mux(over, cw, v);
  }
  cb.output(sub_mod(cb, v, r, p, k));
  return cb.build();
}

BoolCircuit maxpool(int window, int k, u64 p) {
  check_width(k, p);
  if (window < 2) throw ParamError("pooling window must be at least 2");
  CircuitBuilder cb;
  std::vector<Word> a, b;
  for (int i = 0; i < window; ++i) a.push_back(cb.garbler_input(k));
  for (int i = 0; i < window; ++i) b.push_back(cb.evaluator_input(k));
  const Word r = cb.evaluator_input(k);
  std::vector<Word> level;
  for (int i = 0; i < window; ++i) level.push_back(to_signed(cb, add_mod(cb, a[i], b[i], p, k), p, k));
  while (level.size() > 1) {
    std::vector<Word> next;
    for (std::size_t i = 0; i + 1 < level.size(); i += 2) {
      const Bit lt = cb.lt_signed(level[i], level[i + 1]);
      next.push_back(cb.mux(lt, level[i + 1], level[i]));
    }
    if (level.size() % 2) next.push_back(level.back());
    level = std::move(next);
  }
  cb.output(sub_mod(cb, from_signed(cb, level[0], p, k), r, p, k));
  return cb.build();
}

BoolCircuit argmax(int labels, int k, u64 p) {
  check_width(k, p);
  if (labels < 2) throw ParamError("argmax needs at least two labels");
  const int idx_bits = std::bit_width(static_cast<unsigned>(labels - 1));
  CircuitBuilder cb;
  std::vector<Word> a, b;
  for (int i = 0; i < labels; ++i) a.push_back(cb.garbler_input(k));
  for (int i = 0; i < labels; ++i) b.push_back(cb.evaluator_input(k));
  Word best = to_signed(cb, add_mod(cb, a[0], b[0], p, k), p, k);
  Word idx = cb.constant(0, idx_bits);
  for (int i = 1; i < labels; ++i) {
    const Word v = to_signed(cb, add_mod(cb, a[i], b[i], p, k), p, k);
    const Bit better = cb.lt_signed(best, v);  // strict: ties keep the lower index
    best = cb.mux(better, v, best);
    idx = cb.mux(better, cb.constant(static_cast<u64>(i), idx_bits), idx);
  }
  cb.output(idx);
  return cb.build();
}

BoolCircuit trunc_reshare(int k, u64 p, int f, u64 clamp) {
  check_width(k, p);
  if (f < 0 || f > k) throw ParamError("shift out of range");
  CircuitBuilder cb;
  const Word a = cb.garbler_input(k);
  const Word b = cb.evaluator_input(k);
  const Word r = cb.evaluator_input(k);
  const Word s = to_signed(cb, add_mod(cb, a, b, p, k), p, k);
  const std::size_t w = s.size();
  Word v(w);
  for (std::size_t i = 0; i < w; ++i) v[i] = i + f < w ? s[i + f] : s.back();
  if (clamp > 0) {
    const u64 mask = (w >= 64) ? ~0ULL : ((1ULL << w) - 1);
    const Word hi = cb.constant(clamp, w);
    const Word lo = cb.constant((~clamp + 1) & mask, w);
    v = cb.mux(cb.lt_signed(hi, v), hi, v);
    v = cb.mux(cb.lt_signed(v, lo), lo, v);
  }
  cb.output(sub_mod(cb, from_signed(cb, v, p, k), r, p, k));
  return cb.build();
}

BoolCircuit identity(int bits) {
  CircuitBuilder cb;
  const Word a = cb.garbler_input(bits);
  const Word b = cb.evaluator_input(bits);
  cb.output(a);
  cb.output(b);
  return cb.build();
}

BoolCircuit adder(int bits) {
  CircuitBuilder cb;
  const Word a = cb.garbler_input(bits);
  const Word b = cb.evaluator_input(bits);
  cb.output(cb.add(a, b).first);
  return cb.build();
}

}  // namespace circuits

namespace {

const GateHash& gate_hash() {
  static const GateHash h;
  return h;
}

}  // namespace

GarbledCircuit garble(const BoolCircuit& c, std::size_t instances, const Block& seed, u64 tweak_base,
                      GarblerSecrets& s) {
  Prg rng(seed);
  const GateHash& H = gate_hash();
  const Block one_lsb(0, 1);
  s.delta = rng.next_block();
  if (!s.delta.lsb()) s.delta ^= one_lsb;
  const Block R = s.delta;

  const std::size_t gin = c.garbler_inputs.size(), ein = c.evaluator_inputs.size();
  s.garbler_zero.assign(instances * (1 + gin), Block());
  s.evaluator_zero.assign(instances * ein, Block());
  s.decode.assign(instances * c.outputs.size(), 0);

  GarbledCircuit gc;
  gc.circuit_hash = c.hash();
  gc.instances = instances;
  gc.and_gates = c.and_count;
  gc.tweak_base = tweak_base;
  gc.tables.resize(instances * c.and_count * 4);
  gc.ot_indices = c.evaluator_inputs;

  std::vector<Block> L(c.wire_count);
  for (std::size_t inst = 0; inst < instances; ++inst) {
    L[0] = rng.next_block();
    s.garbler_zero[inst * (1 + gin)] = L[0];
    for (std::size_t i = 0; i < gin; ++i) {
      L[c.garbler_inputs[i]] = rng.next_block();
      s.garbler_zero[inst * (1 + gin) + 1 + i] = L[c.garbler_inputs[i]];
    }
    for (std::size_t i = 0; i < ein; ++i) {
      L[c.evaluator_inputs[i]] = rng.next_block();
      s.evaluator_zero[inst * ein + i] = L[c.evaluator_inputs[i]];
    }
    Block* table = gc.tables.data() + inst * c.and_count * 4;
    u64 tweak = tweak_base + inst * c.and_count;
    for (const Gate& g : c.gates) {
      if (g.kind == GateKind::xor_gate) {
        L[g.out] = L[g.a] ^ L[g.b];
        continue;
      }
      const Block A0 = L[g.a], B0 = L[g.b];
      const Block C0 = rng.next_block();
      L[g.out] = C0;
      for (int va = 0; va < 2; ++va) {
        const Block A = va ? A0 ^ R : A0;
        for (int vb = 0; vb < 2; ++vb) {
          const Block B = vb ? B0 ^ R : B0;
          const int row = 2 * static_cast<int>(A.lsb()) + static_cast<int>(B.lsb());
          table[row] = H(A, B, tweak) ^ ((va & vb) ? C0 ^ R : C0);
        }
      }
      table += 4;
      ++tweak;
    }
    for (std::size_t o = 0; o < c.outputs.size(); ++o) s.decode[inst * c.outputs.size() + o] = L[c.outputs[o]].lsb();
  }
  return gc;
}

std::vector<Block> garbler_labels(const BoolCircuit& c, const GarblerSecrets& s, std::span<const u8> bits) {
  const std::size_t gin = c.garbler_inputs.size();
  const std::size_t instances = s.garbler_zero.size() / (1 + gin);
  if (bits.size() != instances * gin) throw ParamError("garbler input bit count mismatch");
  std::vector<Block> out(s.garbler_zero.size());
  for (std::size_t inst = 0; inst < instances; ++inst) {
    out[inst * (1 + gin)] = s.garbler_zero[inst * (1 + gin)] ^ s.delta;
    for (std::size_t i = 0; i < gin; ++i) {
      const Block z = s.garbler_zero[inst * (1 + gin) + 1 + i];
      out[inst * (1 + gin) + 1 + i] = bits[inst * gin + i] ? z ^ s.delta : z;
    }
  }
  return out;
}

std::vector<std::pair<Block, Block>> evaluator_label_pairs(const GarblerSecrets& s) {
  std::vector<std::pair<Block, Block>> out(s.evaluator_zero.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {s.evaluator_zero[i], s.evaluator_zero[i] ^ s.delta};
  return out;
}

std::vector<Block> evaluate(const BoolCircuit& c, const GarbledCircuit& gc, std::span<const Block> garbler_active,
                            std::span<const Block> evaluator_active) {
  if (gc.circuit_hash != c.hash()) throw ProtocolAbort("garbled circuit does not match the expected circuit");
  if (gc.and_gates != c.and_count || gc.tables.size() != gc.instances * c.and_count * 4)
    throw ProtocolAbort("garbled table size mismatch");
  const std::size_t gin = c.garbler_inputs.size(), ein = c.evaluator_inputs.size();
  if (garbler_active.size() != gc.instances * (1 + gin) || evaluator_active.size() != gc.instances * ein)
    throw ProtocolAbort("input label count mismatch");
  const GateHash& H = gate_hash();
  std::vector<Block> out(gc.instances * c.outputs.size());
  std::vector<Block> L(c.wire_count);
  for (std::size_t inst = 0; inst < gc.instances; ++inst) {
    L[0] = garbler_active[inst * (1 + gin)];
    for (std::size_t i = 0; i < gin; ++i) L[c.garbler_inputs[i]] = garbler_active[inst * (1 + gin) + 1 + i];
    for (std::size_t i = 0; i < ein; ++i) L[c.evaluator_inputs[i]] = evaluator_active[inst * ein + i];
    const Block* table = gc.tables.data() + inst * c.and_count * 4;
    u64 tweak = gc.tweak_base + inst * c.and_count;
    for (const Gate& g : c.gates) {
      if (g.kind == GateKind::xor_gate) {
        L[g.out] = L[g.a] ^ L[g.b];
        continue;
      }
      const Block& A = L[g.a];
      const Block& B = L[g.b];
      const int row = 2 * static_cast<int>(A.lsb()) + static_cast<int>(B.lsb());
      L[g.out] = table[row] ^ H(A, B, tweak);
      table += 4;
      ++tweak;
    }
    for (std::size_t o = 0; o < c.outputs.size(); ++o) out[inst * c.outputs.size() + o] = L[c.outputs[o]];
  }
  return out;
}

std::vector<u8> permute_bits(std::span<const Block> output_labels) {
  std::vector<u8> out(output_labels.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = output_labels[i].lsb();
  return out;
}

std::vector<u8> decode_outputs(std::span<const u8> permute, const GarblerSecrets& s) {
  if (permute.size() != s.decode.size()) throw ProtocolAbort("output bit count mismatch");
  std::vector<u8> out(permute.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (permute[i] ^ s.decode[i]) & 1;
  return out;
}

bool label_is_valid(const Block& label, const Block& zero, const Block& delta) {
  return label == zero || label == (zero ^ delta);
}

std::vector<u8> serialize(const GarbledCircuit& gc) {
  ByteWriter w;
  w.bytes(gc.circuit_hash);
  w.u64v(gc.instances);
  w.u64v(gc.and_gates);
  w.u64v(gc.tweak_base);
  w.u64v(gc.tables.size());
  auto& buf = w.data();
  const std::size_t at = buf.size();
  buf.resize(at + gc.tables.size() * 16);
  for (std::size_t i = 0; i < gc.tables.size(); ++i) {
    const u64 lo = gc.tables[i].lo(), hi = gc.tables[i].hi();
    for (int b = 0; b < 8; ++b) {
      buf[at + 16 * i + b] = static_cast<u8>(lo >> (8 * b));
      buf[at + 16 * i + 8 + b] = static_cast<u8>(hi >> (8 * b));
    }
  }
  w.u32v(static_cast<u32>(gc.ot_indices.size()));
  for (u32 x : gc.ot_indices) w.u32v(x);
  return w.take();
}

GarbledCircuit deserialize_garbled(std::span<const u8> bytes) {
  ByteReader r(bytes);
  GarbledCircuit gc;
  auto h = r.bytes(32);
  std::copy(h.begin(), h.end(), gc.circuit_hash.begin());
  gc.instances = r.u64v();
  gc.and_gates = r.u64v();
  gc.tweak_base = r.u64v();
  const u64 rows = r.u64v();
  if (rows != gc.instances * gc.and_gates * 4) throw FormatError("garbled table row count inconsistent");
  if (rows > r.remaining() / 16) throw FormatError("truncated garbled tables");
  auto raw = r.bytes(rows * 16);
  gc.tables.resize(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    u64 lo = 0, hi = 0;
    for (int b = 0; b < 8; ++b) {
      lo |= static_cast<u64>(raw[16 * i + b]) << (8 * b);
      hi |= static_cast<u64>(raw[16 * i + 8 + b]) << (8 * b);
    }
    gc.tables[i] = Block(hi, lo);
  }
  const u32 n = r.u32v();
  for (u32 i = 0; i < n; ++i) gc.ot_indices.push_back(r.u32v());
  r.expect_end();
  return gc;
}

std::vector<u8> ot_choose(std::span<const u8> choices, const OtReceiverPad& pad) {
  if (pad.consumed) throw ProtocolAbort("OT correlation already consumed");
  if (choices.size() != pad.choice.size()) throw ParamError("OT choice count does not match the pad");
  std::vector<u8> e(choices.size());
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = (choices[i] ^ pad.choice[i]) & 1;
  return e;
}

std::vector<Block> ot_respond(std::span<const std::pair<Block, Block>> pairs, std::span<const u8> e, OtSenderPad& pad) {
  if (pad.consumed) throw ProtocolAbort("OT correlation already consumed");
  if (pairs.size() != pad.r0.size() || e.size() != pairs.size()) throw ProtocolAbort("OT message size mismatch");
  pad.consumed = true;
  std::vector<Block> y(2 * pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const bool ei = e[i] & 1;
    y[2 * i] = pairs[i].first ^ (ei ? pad.r1[i] : pad.r0[i]);
    y[2 * i + 1] = pairs[i].second ^ (ei ? pad.r0[i] : pad.r1[i]);
  }
  return y;
}

std::vector<Block> ot_receive(std::span<const u8> choices, std::span<const Block> y, OtReceiverPad& pad) {
  if (pad.consumed) throw ProtocolAbort("OT correlation already consumed");
  if (y.size() != 2 * choices.size() || choices.size() != pad.rc.size()) throw ProtocolAbort("OT message size mismatch");
  pad.consumed = true;
  std::vector<Block> out(choices.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = y[2 * i + (choices[i] & 1)] ^ pad.rc[i];
  return out;
}

std::vector<Block> ot_transfer_local(std::span<const std::pair<Block, Block>> pairs, std::span<const u8> choices,
                                     OtSenderPad& sender, OtReceiverPad& receiver) {
  const auto e = ot_choose(choices, receiver);
  const auto y = ot_respond(pairs, e, sender);
  return ot_receive(choices, y, receiver);
}

void push_bits(std::vector<u8>& out, u64 value, int k) {
  for (int i = 0; i < k; ++i) out.push_back(static_cast<u8>((value >> i) & 1));
}

u64 read_bits(std::span<const u8> bits, int k) {
  u64 v = 0;
  for (int i = 0; i < k; ++i) v |= static_cast<u64>(bits[i] & 1) << i;
  return v;
}

}  // namespace bunet
