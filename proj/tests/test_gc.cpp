#include <gtest/gtest.h>

#include "bunet/gc.hpp"

using namespace bunet;

namespace {

// Garble, transfer evaluator labels through dealer OT, evaluate, decode.
// Inputs are per instance, concatenated.
std::vector<u8> run_garbled(const BoolCircuit& c, std::size_t instances, std::span<const u8> g_bits,
                            std::span<const u8> e_bits, u64 seed = 1) {
  GarblerSecrets s;
  auto gc = garble(c, instances, derive_key(seed, "test.garble"), 1000, s);
  GarbledCircuit wire = deserialize_garbled(serialize(gc));
  Dealer dealer(seed);
  auto [sp, rp] = dealer.ot(e_bits.size());
  auto pairs = evaluator_label_pairs(s);
  auto e_labels = ot_transfer_local(pairs, e_bits, sp, rp);
  auto out = evaluate(c, wire, garbler_labels(c, s, g_bits), e_labels);
  return decode_outputs(permute_bits(out), s);
}

std::vector<u8> bits_of(std::initializer_list<std::pair<u64, int>> xs) {
  std::vector<u8> v;
  for (auto [x, k] : xs) push_bits(v, x, k);
  return v;
}

i64 sgn(u64 x, u64 p) { return x > p / 2 ? static_cast<i64>(x) - static_cast<i64>(p) : static_cast<i64>(x); }
u64 res(i64 x, u64 p) { return static_cast<u64>(((x % static_cast<i64>(p)) + static_cast<i64>(p)) % static_cast<i64>(p)); }

}  // namespace

TEST(Circuit, AndTruthTable) {
  CircuitBuilder cb;
  auto a = cb.garbler_input(1);
  auto b = cb.evaluator_input(1);
  cb.output(cb.and_(a[0], b[0]));
  auto c = cb.build();
  EXPECT_EQ(c.and_count, 1u);
  std::vector<u8> g, e;
  for (u8 x = 0; x < 2; ++x)
    for (u8 y = 0; y < 2; ++y) {
      g.push_back(x);
      e.push_back(y);
    }
  EXPECT_EQ(run_garbled(c, 4, g, e), (std::vector<u8>{0, 0, 0, 1}));
}

TEST(Circuit, XorOnlyHasNoTables) {
  CircuitBuilder cb;
  auto a = cb.garbler_input(3);
  auto b = cb.evaluator_input(3);
  cb.output(cb.xor_(cb.xor_(a[0], b[1]), cb.not_(a[2])));
  auto c = cb.build();
  GarblerSecrets s;
  auto gc = garble(c, 5, Block(0, 1), 0, s);
  EXPECT_EQ(gc.table_rows(), 0u);
  // 1 ^ 0 ^ !1 = 1
  EXPECT_EQ(run_garbled(c, 1, std::vector<u8>{1, 0, 1}, std::vector<u8>{0, 0, 0}), std::vector<u8>{1});
}

TEST(Circuit, ConstantsFoldAndMaterialize) {
  CircuitBuilder cb;
  auto a = cb.garbler_input(1);
  cb.output(cb.and_(a[0], CircuitBuilder::zero()));
  cb.output(cb.and_(a[0], CircuitBuilder::one()));
  cb.output(CircuitBuilder::one());
  cb.output(cb.xor_(a[0], a[0]));
  auto c = cb.build();
  EXPECT_EQ(c.and_count, 0u);
  for (u8 x = 0; x < 2; ++x) {
    std::vector<u8> g{x};
    std::vector<u8> want{0, x, 1, 0};
    EXPECT_EQ(evaluate_plain(c, g, {}), want);
    EXPECT_EQ(run_garbled(c, 1, g, {}), want);
  }
}

TEST(Circuit, IdentityExhaustive) {
  auto c = circuits::identity(4);
  std::vector<u8> g, e, want;
  for (u64 x = 0; x < 16; ++x) {
    push_bits(g, x, 4);
    push_bits(e, 15 - x, 4);
    push_bits(want, x, 4);
    push_bits(want, 15 - x, 4);
  }
  EXPECT_EQ(run_garbled(c, 16, g, e), want);
}

TEST(Circuit, AdderExhaustive) {
  auto c = circuits::adder(4);
  EXPECT_EQ(c.and_count, 4u);
  std::vector<u8> g, e;
  for (u64 x = 0; x < 16; ++x)
    for (u64 y = 0; y < 16; ++y) {
      push_bits(g, x, 4);
      push_bits(e, y, 4);
    }
  auto out = run_garbled(c, 256, g, e);
  std::size_t i = 0;
  for (u64 x = 0; x < 16; ++x)
    for (u64 y = 0; y < 16; ++y, ++i) ASSERT_EQ(read_bits(std::span(out).subspan(4 * i, 4), 4), (x + y) % 16);
}

TEST(Circuit, SignedCompareExhaustive) {
  CircuitBuilder cb;
  auto a = cb.garbler_input(4);
  auto b = cb.evaluator_input(4);
  cb.output(cb.lt_signed(a, b));
  auto c = cb.build();
  for (int x = -8; x < 8; ++x)
    for (int y = -8; y < 8; ++y) {
      auto out = evaluate_plain(c, bits_of({{static_cast<u64>(x) & 15, 4}}), bits_of({{static_cast<u64>(y) & 15, 4}}));
      ASSERT_EQ(out[0], x < y ? 1 : 0) << x << " " << y;
    }
}

TEST(Circuit, ReluExhaustiveSmallModulus) {
  const u64 p = 13;
  const int k = 4;
  for (int f : {0, 1}) {
    for (u64 clamp : {0, 3}) {
      auto c = circuits::relu_reshare(k, p, f, clamp);
      std::vector<u8> g, e;
      std::vector<u64> want;
      for (u64 x = 0; x < p; ++x)
        for (u64 sa = 0; sa < p; ++sa) {
          const u64 sb = (x + p - sa) % p;
          const u64 r = (x * 7 + sa) % p;
          push_bits(g, sa, k);
          push_bits(e, sb, k);
          push_bits(e, r, k);
          i64 v = std::max<i64>(sgn(x, p), 0) >> f;
          if (clamp) v = std::min<i64>(v, static_cast<i64>(clamp));
          want.push_back(res(v - static_cast<i64>(r), p));
        }
      auto out = run_garbled(c, want.size(), g, e);
      for (std::size_t i = 0; i < want.size(); ++i)
        ASSERT_EQ(read_bits(std::span(out).subspan(k * i, k), k), want[i]) << "f=" << f << " clamp=" << clamp << " i=" << i;
    }
  }
}

TEST(Circuit, TruncExhaustiveSmallModulus) {
  const u64 p = 13;
  const int k = 4;
  for (int f : {0, 1, 2}) {
    for (u64 clamp : {0, 1}) {
      auto c = circuits::trunc_reshare(k, p, f, clamp);
      for (u64 x = 0; x < p; ++x)
        for (u64 sa = 0; sa < p; sa += 3) {
          const u64 r = (x + 2 * sa) % p;
          auto e = bits_of({{(x + p - sa) % p, k}, {r, k}});
          auto out = evaluate_plain(c, bits_of({{sa, k}}), e);
          i64 v = sgn(x, p) >> f;
          if (clamp) v = std::clamp<i64>(v, -static_cast<i64>(clamp), static_cast<i64>(clamp));
          ASSERT_EQ(read_bits(out, k), res(v - static_cast<i64>(r), p)) << x << " f=" << f;
        }
    }
  }
}

TEST(Circuit, MaxpoolExhaustiveSmallModulus) {
  const u64 p = 13;
  const int k = 4;
  auto c = circuits::maxpool(2, k, p);
  std::vector<u8> g, e;
  std::vector<u64> want;
  for (u64 x = 0; x < p; ++x)
    for (u64 y = 0; y < p; ++y) {
      const u64 a0 = (x * 5 + 1) % p, a1 = (y * 3 + 2) % p, r = (x + y) % p;
      push_bits(g, a0, k);
      push_bits(g, a1, k);
      push_bits(e, (x + p - a0) % p, k);
      push_bits(e, (y + p - a1) % p, k);
      push_bits(e, r, k);
      want.push_back(res(std::max(sgn(x, p), sgn(y, p)) - static_cast<i64>(r), p));
    }
  auto out = run_garbled(c, want.size(), g, e);
  for (std::size_t i = 0; i < want.size(); ++i) ASSERT_EQ(read_bits(std::span(out).subspan(k * i, k), k), want[i]);

  auto c4 = circuits::maxpool(4, k, p);
  Prg rng(3, "t");
  for (int t = 0; t < 500; ++t) {
    std::vector<u8> gg, ee;
    i64 best = -100;
    std::vector<u64> bs;
    for (int j = 0; j < 4; ++j) {
      const u64 x = rng.uniform(p), a = rng.uniform(p);
      best = std::max(best, sgn(x, p));
      push_bits(gg, a, k);
      bs.push_back((x + p - a) % p);
    }
    for (u64 b : bs) push_bits(ee, b, k);
    push_bits(ee, 0, k);
    ASSERT_EQ(read_bits(evaluate_plain(c4, gg, ee), k), res(best, p));
  }
}

TEST(Circuit, ArgmaxExhaustiveSmallModulus) {
  const u64 p = 13;
  const int k = 4;
  auto c = circuits::argmax(3, k, p);
  EXPECT_EQ(c.outputs.size(), 2u);
  for (u64 x0 = 0; x0 < p; ++x0)
    for (u64 x1 = 0; x1 < p; ++x1)
      for (u64 x2 = 0; x2 < p; ++x2) {
        const u64 xs[3] = {x0, x1, x2};
        std::vector<u8> g, e;
        for (int j = 0; j < 3; ++j) push_bits(g, (xs[j] * 2) % p, k);
        for (int j = 0; j < 3; ++j) push_bits(e, (xs[j] + p - (xs[j] * 2) % p) % p, k);
        int best = 0;
        for (int j = 1; j < 3; ++j)
          if (sgn(xs[j], p) > sgn(xs[best], p)) best = j;
        ASSERT_EQ(read_bits(evaluate_plain(c, g, e), 2), static_cast<u64>(best));
      }
}

TEST(Circuit, ArgmaxHandExamples) {
  const u64 p = 1032193;
  const int k = bit_width_for(p);
  auto c = circuits::argmax(3, k, p);
  auto run = [&](std::vector<i64> v) {
    std::vector<u8> g, e;
    for (std::size_t j = 0; j < v.size(); ++j) push_bits(g, 77 * (j + 1), k);
    for (std::size_t j = 0; j < v.size(); ++j) push_bits(e, res(v[j] - 77 * static_cast<i64>(j + 1), p), k);
    return read_bits(run_garbled(c, 1, g, e), 2);
  };
  EXPECT_EQ(run({1, 1, 0}), 0u);
  EXPECT_EQ(run({-5, 2, 1}), 1u);
}

TEST(Circuit, RandomFullWidthRelu) {
  const u64 p = 1032193;
  const int k = bit_width_for(p);
  EXPECT_EQ(k, 20);
  auto c = circuits::relu_reshare(k, p, 3, 127);
  Prg rng(4, "t");
  const std::size_t n = 10000;
  std::vector<u8> g, e;
  std::vector<u64> want;
  for (std::size_t i = 0; i < n; ++i) {
    const u64 x = rng.uniform(p), a = rng.uniform(p), r = rng.uniform(p);
    push_bits(g, a, k);
    push_bits(e, (x + p - a) % p, k);
    push_bits(e, r, k);
    const i64 v = std::min<i64>(std::max<i64>(sgn(x, p), 0) >> 3, 127);
    want.push_back(res(v - static_cast<i64>(r), p));
  }
  auto out = run_garbled(c, n, g, e, 9);
  for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(read_bits(std::span(out).subspan(k * i, k), k), want[i]);
}

TEST(Circuit, ReshareOutputIsMasked) {
  // Alice's decoded share is v - r; with r uniform it is uniform even for a
  // constant v.
  const u64 p = 13;
  const int k = 4;
  auto c = circuits::relu_reshare(k, p);
  std::vector<u8> g, e;
  Prg rng(5, "t");
  const std::size_t n = 13000;
  for (std::size_t i = 0; i < n; ++i) {
    push_bits(g, 3, k);
    push_bits(e, 2, k);
    push_bits(e, rng.uniform(p), k);
  }
  auto out = run_garbled(c, n, g, e);
  std::vector<int> hist(p, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const u64 v = read_bits(std::span(out).subspan(k * i, k), k);
    ASSERT_LT(v, p);
    ++hist[v];
  }
  for (int h : hist) EXPECT_NEAR(h, 1000, 150);
}

TEST(Garble, Deterministic) {
  auto c = circuits::adder(8);
  GarblerSecrets s1, s2, s3;
  auto a = garble(c, 3, Block(1, 2), 5, s1);
  auto b = garble(c, 3, Block(1, 2), 5, s2);
  auto d = garble(c, 3, Block(1, 3), 5, s3);
  EXPECT_EQ(serialize(a), serialize(b));
  EXPECT_NE(serialize(a), serialize(d));
  EXPECT_TRUE(s1.delta.lsb());
}

TEST(Garble, WrongCircuitOrTamperedLabelsAbort) {
  auto c = circuits::adder(4);
  GarblerSecrets s;
  auto gc = garble(c, 1, Block(0, 7), 0, s);
  std::vector<u8> g(4, 0), e(4, 1);
  auto gl = garbler_labels(c, s, g);
  std::vector<Block> el;
  for (std::size_t i = 0; i < 4; ++i) el.push_back(s.evaluator_zero[i] ^ s.delta);
  auto out = evaluate(c, gc, gl, el);
  EXPECT_THROW(evaluate(circuits::adder(5), gc, gl, el), ProtocolAbort);
  el[0] = el[0] ^ Block(0, 4);
  auto bad = evaluate(c, gc, gl, el);
  // a label outside {L0, L0 ^ R} poisons everything downstream
  EXPECT_NE(bad, out);
  auto bytes = serialize(gc);
  bytes.pop_back();
  EXPECT_THROW(deserialize_garbled(bytes), FormatError);
}

TEST(Ot, ChoicesAndReuse) {
  Dealer dealer(6);
  auto [sp, rp] = dealer.ot(64);
  std::vector<std::pair<Block, Block>> pairs;
  for (u64 i = 0; i < 64; ++i) pairs.push_back({Block(i, 0), Block(i, 1)});
  std::vector<u8> zeros(64, 0);
  auto got = ot_transfer_local(pairs, zeros, sp, rp);
  for (u64 i = 0; i < 64; ++i) EXPECT_EQ(got[i], pairs[i].first);
  EXPECT_THROW(ot_transfer_local(pairs, zeros, sp, rp), ProtocolAbort);

  auto [sp2, rp2] = dealer.ot(64);
  std::vector<u8> mixed(64);
  for (u64 i = 0; i < 64; ++i) mixed[i] = i % 3 == 0;
  got = ot_transfer_local(pairs, mixed, sp2, rp2);
  for (u64 i = 0; i < 64; ++i) EXPECT_EQ(got[i], mixed[i] ? pairs[i].second : pairs[i].first);
}

TEST(Ot, ChoiceMessageHidesChoices) {
  // e = b ^ c with a uniform dealer bit c: all-zero and all-one choices give
  // balanced e.
  Dealer dealer(7);
  auto [sp, rp] = dealer.ot(4000);
  std::vector<u8> ones(4000, 1);
  auto e = ot_choose(ones, rp);
  int count = 0;
  for (u8 b : e) count += b;
  EXPECT_NEAR(count, 2000, 200);
}
