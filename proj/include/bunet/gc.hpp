#pragma once

#include <span>
#include <vector>

#include "bunet/crypto.hpp"
#include "bunet/mpc.hpp"

namespace bunet {

enum class GateKind : u8 { xor_gate = 0, and_gate = 1 };

struct Gate {
  GateKind kind;
  u32 a, b, out;
};

// Topologically ordered boolean circuit. Wire 0 carries the constant 1 and
// is supplied by the garbler; NOT is XOR with it.
struct BoolCircuit {
  u32 wire_count = 1;
  std::vector<Gate> gates;
  std::vector<u32> garbler_inputs;
  std::vector<u32> evaluator_inputs;
  std::vector<u32> outputs;
  std::size_t and_count = 0;

  Digest hash() const;
};

// Plaintext evaluation, the oracle for garbled evaluation.
std::vector<u8> evaluate_plain(const BoolCircuit& c, std::span<const u8> garbler_bits,
                               std::span<const u8> evaluator_bits);

// Builder with constant folding. Words are little-endian bit vectors.
class CircuitBuilder {
 public:
  struct Bit {
    u32 v;
    bool operator==(const Bit&) const = default;
  };
  using Word = std::vector<Bit>;

  static constexpr Bit zero() { return Bit{kConst0}; }
  static constexpr Bit one() { return Bit{kConst1}; }

  Word garbler_input(std::size_t bits);
  Word evaluator_input(std::size_t bits);
  void output(Bit b);
  void output(const Word& w);

  Bit xor_(Bit a, Bit b);
  Bit and_(Bit a, Bit b);
  Bit not_(Bit a) { return xor_(a, one()); }
  Bit or_(Bit a, Bit b) { return xor_(xor_(a, b), and_(a, b)); }
  // s ? x : y
  Bit mux(Bit s, Bit x, Bit y) { return xor_(y, and_(s, xor_(x, y))); }

  Word constant(u64 value, std::size_t bits) const;
  Word mux(Bit s, const Word& x, const Word& y);
  // a + b + carry_in over max width; returns (sum, carry_out).
  std::pair<Word, Bit> add(const Word& a, const Word& b, Bit carry_in = zero());
  // a - b over max width; returns (difference mod 2^w, a >= b).
  std::pair<Word, Bit> sub(const Word& a, const Word& b);
  Bit ge_unsigned(const Word& a, const Word& b) { return sub(a, b).second; }
  // Signed comparison of two's complement words of equal width.
  Bit lt_signed(const Word& a, const Word& b);

  BoolCircuit build();

 private:
  static constexpr u32 kConst0 = 0xffffffffu;
  static constexpr u32 kConst1 = 0xfffffffeu;
  static bool is_const(Bit b) { return b.v >= kConst1; }
  u32 materialize(Bit b);

  BoolCircuit c_;
};

// Number of bits needed for residues mod p.
int bit_width_for(u64 p);

// Composite circuits over residues mod p with k-bit inputs.
namespace circuits {

// Garbler: s_A. Evaluator: s_B, then Bob's fresh mask r. Output:
// (min(ReLU(signed(s_A + s_B)) >> f, clamp) - r) mod p; clamp = 0 means none.
BoolCircuit relu_reshare(int k, u64 p, int f = 0, u64 clamp = 0);

// Garbler: s_A[0..w). Evaluator: s_B[0..w), then r. Output: (max - r) mod p
// over the signed values.
BoolCircuit maxpool(int window, int k, u64 p);

// Garbler: s_A[0..L). Evaluator: s_B[0..L). Output: index of the largest
// signed value, lowest index on ties, ceil(lg L) bits.
BoolCircuit argmax(int labels, int k, u64 p);

// Garbler: s_A. Evaluator: s_B, r. Output: (clamp(floor(signed / 2^f)) - r)
// mod p with symmetric clamp to [-clamp, clamp]; clamp = 0 means none.
BoolCircuit trunc_reshare(int k, u64 p, int f, u64 clamp = 0);

// n-bit identity and adder, used to exercise the garbling machinery.
BoolCircuit identity(int bits);
BoolCircuit adder(int bits);

}  // namespace circuits

// ---- garbling ---------------------------------------------------------------

// Garbler-side secrets for a batch of instances of one circuit.
struct GarblerSecrets {
  Block delta;                        // global free-XOR offset, lsb = 1
  std::vector<Block> garbler_zero;    // instances x (1 + garbler inputs)
  std::vector<Block> evaluator_zero;  // instances x evaluator inputs
  std::vector<u8> decode;             // instances x outputs
};

// Wire format: circuit hash, instance count, AND count, tables, and the
// evaluator-input OT indices.
struct GarbledCircuit {
  Digest circuit_hash{};
  u64 instances = 0;
  u64 and_gates = 0;  // per instance
  u64 tweak_base = 0;
  std::vector<Block> tables;  // 4 rows per AND gate
  std::vector<u32> ot_indices;

  std::size_t table_rows() const { return tables.size(); }
};

std::vector<u8> serialize(const GarbledCircuit& gc);
GarbledCircuit deserialize_garbled(std::span<const u8> bytes);

// Deterministic for a given seed; tweaks start at tweak_base and advance by
// one per AND gate, so distinct batches must use disjoint ranges.
GarbledCircuit garble(const BoolCircuit& c, std::size_t instances, const Block& seed, u64 tweak_base,
                      GarblerSecrets& secrets);

// Active labels for the garbler's own inputs (constant-one wire first).
std::vector<Block> garbler_labels(const BoolCircuit& c, const GarblerSecrets& s, std::span<const u8> bits);
// Both labels for every evaluator input wire (for OT), as (zero, one) pairs.
std::vector<std::pair<Block, Block>> evaluator_label_pairs(const GarblerSecrets& s);

// Returns the output labels of every instance.
std::vector<Block> evaluate(const BoolCircuit& c, const GarbledCircuit& gc, std::span<const Block> garbler_active,
                            std::span<const Block> evaluator_active);

// Output permute bits go to the decode-map holder, who XORs its decode bits.
std::vector<u8> permute_bits(std::span<const Block> output_labels);
std::vector<u8> decode_outputs(std::span<const u8> permute, const GarblerSecrets& s);
// Checks a received output label against the garbler's pair; a forged or
// corrupted label matches neither.
bool label_is_valid(const Block& label, const Block& zero, const Block& delta);

// ---- oblivious transfer from dealer correlations ----------------------------

// Receiver: e = b xor c.
std::vector<u8> ot_choose(std::span<const u8> choices, const OtReceiverPad& pad);
// Sender: y0 = X0 xor r_e, y1 = X1 xor r_{1-e}. Consumes the pad.
std::vector<Block> ot_respond(std::span<const std::pair<Block, Block>> pairs, std::span<const u8> e, OtSenderPad& pad);
// Receiver: X_b = y_b xor r_c. Consumes the pad.
std::vector<Block> ot_receive(std::span<const u8> choices, std::span<const Block> y, OtReceiverPad& pad);

// Dealer-mode OT run locally (both roles), for tests and tooling.
std::vector<Block> ot_transfer_local(std::span<const std::pair<Block, Block>> pairs, std::span<const u8> choices,
                                     OtSenderPad& sender, OtReceiverPad& receiver);

// Bits of a residue, little-endian, k of them.
void push_bits(std::vector<u8>& out, u64 value, int k);
u64 read_bits(std::span<const u8> bits, int k);

}  // namespace bunet
