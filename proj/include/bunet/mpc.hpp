#pragma once

#include <array>
#include <span>
#include <utility>
#include <vector>

#include "bunet/crypto.hpp"
#include "bunet/pahe.hpp"
#include "bunet/ring.hpp"

namespace bunet {

// One party's additive share of an integer tensor mod p_A.
struct ShareVector {
  std::vector<u64> values;
  Role owner = Role::alice;
  std::vector<std::size_t> dims;  // logical tensor dims, empty if flat

  std::size_t size() const { return values.size(); }
};

// s_self = (x - s_other) mod p
ShareVector share(std::span<const u64> x, const ShareVector& s_other, const Modulus& p);
std::vector<u64> rec(const ShareVector& a, const ShareVector& b, const Modulus& p);
std::vector<i64> rec_signed(const ShareVector& a, const ShareVector& b, const Modulus& p);

std::vector<u64> random_vector(Prg& rng, std::size_t n, const Modulus& p);

// Homomorphic secret sharing inside PAHE slots (p_A = p): the mask holder
// subtracts its share from the ciphertext; adding it back restores the value.
Ciphertext hss_share(const Evaluator& ev, const Ciphertext& c, const PlainVector& s_b);
Ciphertext hss_rec(const Evaluator& ev, const Ciphertext& c, const PlainVector& s_b);

// ---- dealer -------------------------------------------------------------

enum class CorrelationKind : u8 { triple = 0, ot = 1 };
inline constexpr std::size_t kCorrelationKinds = 2;

struct TripleShare {
  std::vector<u64> a, b, c;
  u64 first_index = 0;
  bool consumed = false;

  std::size_t size() const { return a.size(); }
};

// Random-OT correlation: the sender holds (r0, r1), the receiver holds a
// choice bit c and r_c.
struct OtSenderPad {
  std::vector<Block> r0, r1;
  bool consumed = false;
};
struct OtReceiverPad {
  std::vector<u8> choice;
  std::vector<Block> rc;
  bool consumed = false;
};

struct DealerBudget {
  std::array<u64, kCorrelationKinds> limit{1ULL << 40, 1ULL << 40};
};

// Trusted third party. Everything is derived from the dealer seed by
// (kind, first index), so two dealers with the same seed emit identical
// streams when asked the same sequence of requests.
class Dealer {
 public:
  explicit Dealer(u64 seed, DealerBudget budget = {});

  const Digest& commitment() const { return commitment_; }
  u64 used(CorrelationKind kind) const { return used_[static_cast<std::size_t>(kind)]; }
  void set_used(CorrelationKind kind, u64 n) { used_[static_cast<std::size_t>(kind)] = n; }

  std::pair<TripleShare, TripleShare> triples(std::size_t count, const Modulus& p);
  std::pair<OtSenderPad, OtReceiverPad> ot(std::size_t count);

 private:
  u64 reserve(CorrelationKind kind, std::size_t count);

  u64 seed_;
  DealerBudget budget_;
  Digest commitment_;
  std::array<u64, kCorrelationKinds> used_{};
};

Digest dealer_commitment(u64 seed);
bool verify_triples(const TripleShare& alice, const TripleShare& bob, const Modulus& p);

// One party's view of the dealer: runs the dealer locally and keeps only
// its own half of every correlation.
class DealerTape {
 public:
  DealerTape(u64 seed, Role role, DealerBudget budget = {});

  Role role() const { return role_; }
  const Digest& commitment() const { return dealer_.commitment(); }
  u64 used(CorrelationKind kind) const { return dealer_.used(kind); }

  TripleShare triples(std::size_t count, const Modulus& p);
  OtSenderPad ot_sender(std::size_t count);
  OtReceiverPad ot_receiver(std::size_t count);

  // File: "BUND" | seed commitment | u8 role | per-kind counters (u64).
  std::vector<u8> save() const;
  static DealerTape load(std::span<const u8> bytes, u64 seed, DealerBudget budget = {});

 private:
  Dealer dealer_;
  Role role_;
};

// ---- Beaver multiplication ------------------------------------------------

// This party's contribution to the openings d = x - a and e = y - b.
struct BeaverOpening {
  std::vector<u64> d, e;
};

BeaverOpening beaver_open(const ShareVector& x, const ShareVector& y, const TripleShare& t, const Modulus& p);
// g = c + e*a + d*b (+ d*e for Alice). Marks the triple consumed; a second
// use aborts.
ShareVector beaver_close(Role role, std::span<const u64> d, std::span<const u64> e, TripleShare& t,
                         const Modulus& p);

struct BeaverTrace {
  std::vector<u64> d, e;  // the opened values
};

// Both parties simulated in one place; returns (g_A, g_B).
std::pair<ShareVector, ShareVector> beaver_hadamard_local(const ShareVector& x_a, const ShareVector& x_b,
                                                          const ShareVector& y_a, const ShareVector& y_b,
                                                          TripleShare& t_a, TripleShare& t_b, const Modulus& p,
                                                          BeaverTrace* trace = nullptr);

// ---- probabilistic truncation ---------------------------------------------

// Smallest multiple of 2^f that is >= bound + 2^(f-1).
u64 trunc_bias(u64 bound, int f);

// Bob re-randomizes his share to -n_B with n_B uniform in [0, p - 2B) and
// sends rho = x_B + n_B to Alice. Requires |signed x| + 2^(f-1) <= B.
// Rec(out) is floor(x / 2^f) + {-1, 0, 1} with mean x / 2^f - 1/2.
struct BobTruncation {
  ShareVector out;
  std::vector<u64> rho;
};
BobTruncation prob_trunc_bob(const ShareVector& x_b, int f, u64 bias, const Modulus& p, Prg& rng);
ShareVector prob_trunc_alice(const ShareVector& x_a, std::span<const u64> rho, int f, u64 bias, const Modulus& p);

}  // namespace bunet
