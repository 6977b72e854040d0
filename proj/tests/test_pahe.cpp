#include <gtest/gtest.h>

#include <random>

#include "bunet/pahe.hpp"

using namespace bunet;

namespace {

const RingParams& rp() { return RingParams::standard(); }

PlainVector random_plain(std::mt19937_64& rng, Encoding enc = Encoding::slots) {
  PlainVector v;
  v.encoding = enc;
  v.values.resize(rp().n());
  for (auto& x : v.values) x = rng() % rp().p().value();
  return v;
}

struct Fixture : ::testing::Test {
  KeyMaterial km = keygen(rp(), {1, 2, 3, 5, 8}, 42);
  Encryptor enc{rp(), km.sk};
  Decryptor dec{rp(), km.sk};
  Evaluator ev{rp()};
  Prg prg{7, "test"};
};

// Within-row left rotation of a flat slot vector.
std::vector<u64> rotate_rows(const std::vector<u64>& v, std::size_t k) {
  const std::size_t half = v.size() / 2;
  std::vector<u64> out(v.size());
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t j = 0; j < half; ++j) out[r * half + j] = v[r * half + (j + k) % half];
  return out;
}

}  // namespace

using Pahe = Fixture;

TEST_F(Pahe, ZeroRoundtrip) {
  PlainVector z{std::vector<u64>(rp().n(), 0)};
  EXPECT_EQ(dec.decrypt(enc.encrypt(z, prg)).values, z.values);
}

TEST_F(Pahe, CountingVectorRoundtrip) {
  PlainVector v;
  for (std::size_t i = 0; i < rp().n(); ++i) v.values.push_back((i + 1) % rp().p().value());
  EXPECT_EQ(dec.decrypt(enc.encrypt(v, prg)).values, v.values);
}

TEST_F(Pahe, RandomRoundtripBothKeysBothEncodings) {
  std::mt19937_64 rng(1);
  Encryptor penc(rp(), km.pk);
  for (int i = 0; i < 50; ++i) {
    auto v = random_plain(rng, i % 2 ? Encoding::slots : Encoding::coefficients);
    ASSERT_EQ(dec.decrypt(enc.encrypt(v, prg)).values, v.values);
    ASSERT_EQ(dec.decrypt(penc.encrypt(v, prg)).values, v.values);
  }
}

TEST(PaheKeygen, SeededKeygenIsDeterministic) {
  auto a = keygen(rp(), {1, 4}, 9);
  auto b = keygen(rp(), {1, 4}, 9);
  EXPECT_EQ(a.sk.s.coeffs, b.sk.s.coeffs);
  EXPECT_EQ(a.pk.p0_eval, b.pk.p0_eval);
  EXPECT_EQ(serialize(a.rotations, rp()), serialize(b.rotations, rp()));
  auto c = keygen(rp(), {1, 4}, 10);
  EXPECT_NE(a.sk.s.coeffs, c.sk.s.coeffs);
}

TEST(PaheKeygen, SecretIsTernary) {
  auto k = keygen(rp(), {}, 3);
  for (u64 x : k.sk.s.coeffs) {
    const i64 v = rp().q().to_signed(x);
    ASSERT_TRUE(v >= -1 && v <= 1);
  }
}

TEST(PaheKeygen, EmptyStepsMeansNoRotation) {
  auto k = keygen(rp(), {}, 3);
  Encryptor enc(rp(), k.sk);
  Prg prg(1, "t");
  auto ct = enc.encrypt_zero(Encoding::slots, prg);
  Evaluator ev(rp());
  EXPECT_THROW(ev.rot(ct, 1, k.rotations), ResourceError);
  EXPECT_THROW(ev.rot(ct, 7, k.rotations), ResourceError);
}

TEST_F(Pahe, AddSubAndIdentities) {
  std::mt19937_64 rng(2);
  const Modulus& p = rp().p();
  for (int i = 0; i < 20; ++i) {
    auto x = random_plain(rng), y = random_plain(rng);
    auto cx = enc.encrypt(x, prg), cy = enc.encrypt(y, prg);
    std::vector<u64> sum(x.values.size()), diff(x.values.size());
    for (std::size_t j = 0; j < sum.size(); ++j) {
      sum[j] = p.add(x.values[j], y.values[j]);
      diff[j] = p.sub(x.values[j], y.values[j]);
    }
    ASSERT_EQ(dec.decrypt(ev.add(cx, cy)).values, sum);
    ASSERT_EQ(dec.decrypt(ev.sub(cx, cy)).values, diff);
    ASSERT_EQ(dec.decrypt(ev.add_plain(cx, y)).values, sum);
    ASSERT_EQ(dec.decrypt(ev.sub_plain(cx, y)).values, diff);
    ASSERT_EQ(dec.decrypt(ev.sub(cx, cx)).values, std::vector<u64>(sum.size(), 0));
  }
  auto x = random_plain(rng);
  auto zero = enc.encrypt_zero(Encoding::slots, prg);
  EXPECT_EQ(dec.decrypt(ev.add(enc.encrypt(x, prg), zero)).values, x.values);
}

TEST_F(Pahe, LayoutMismatchRejected) {
  std::mt19937_64 rng(3);
  auto a = enc.encrypt(random_plain(rng, Encoding::slots), prg);
  auto b = enc.encrypt(random_plain(rng, Encoding::coefficients), prg);
  EXPECT_THROW(ev.add(a, b), ParamError);
  EXPECT_THROW(ev.mul_plain(a, random_plain(rng, Encoding::coefficients)), ParamError);
}

TEST_F(Pahe, MulPlain) {
  std::mt19937_64 rng(4);
  const Modulus& p = rp().p();
  auto x = random_plain(rng);
  auto cx = enc.encrypt(x, prg);
  PlainVector ones{std::vector<u64>(rp().n(), 1)};
  PlainVector zeros{std::vector<u64>(rp().n(), 0)};
  EXPECT_EQ(dec.decrypt(ev.mul_plain(cx, ones)).values, x.values);
  EXPECT_EQ(dec.decrypt(ev.mul_plain(cx, zeros)).values, zeros.values);
  for (int i = 0; i < 20; ++i) {
    auto y = random_plain(rng);
    auto got = dec.decrypt(ev.mul_plain(enc.encrypt(x, prg), y)).values;
    for (std::size_t j = 0; j < got.size(); ++j) ASSERT_EQ(got[j], p.mul(x.values[j], y.values[j]));
  }
}

TEST_F(Pahe, CoefficientProductIsNegacyclicConvolution) {
  std::mt19937_64 rng(5);
  auto u = random_plain(rng, Encoding::coefficients);
  PlainVector w{std::vector<u64>(rp().n(), 0), Encoding::coefficients};
  w.values[0] = 3;
  w.values[5] = rp().p().value() - 2;
  w.values[rp().n() - 1] = 7;
  auto got = dec.decrypt(ev.mul_plain(enc.encrypt(u, prg), w)).values;
  EXPECT_EQ(got, poly_conv_reference(w.values, u.values, rp().p(), ConvStyle::negacyclic, rp().n()));
}

TEST_F(Pahe, RotationSemantics) {
  PlainVector v;
  for (std::size_t i = 0; i < rp().n(); ++i) v.values.push_back(i);
  auto c = enc.encrypt(v, prg);
  EXPECT_EQ(dec.decrypt(ev.rot(c, 0, km.rotations)).values, v.values);
  auto r1 = dec.decrypt(ev.rot(c, 1, km.rotations)).values;
  const std::size_t half = rp().n() / 2;
  // row 0: [1, 2, ..., half-1, 0]
  EXPECT_EQ(r1[0], 1u);
  EXPECT_EQ(r1[half - 2], half - 1);
  EXPECT_EQ(r1[half - 1], 0u);
  EXPECT_EQ(r1[half], half + 1);
  EXPECT_EQ(r1[2 * half - 1], half);
  EXPECT_EQ(r1, rotate_rows(v.values, 1));
}

TEST_F(Pahe, RotationGroupLaw) {
  std::mt19937_64 rng(6);
  auto x = random_plain(rng);
  auto c = enc.encrypt(x, prg);
  auto ab = ev.rot(ev.rot(c, 3, km.rotations), 5, km.rotations);
  EXPECT_EQ(dec.decrypt(ab).values, dec.decrypt(ev.rot(c, 8, km.rotations)).values);
  EXPECT_EQ(dec.decrypt(ab).values, rotate_rows(x.values, 8));
}

TEST(PaheRows, SwapRows) {
  auto km = keygen(rp(), {}, 5, {.base_bits = 15, .row_swap = true});
  Encryptor enc(rp(), km.sk);
  Decryptor dec(rp(), km.sk);
  Evaluator ev(rp());
  Prg prg(2, "t");
  PlainVector v;
  for (std::size_t i = 0; i < rp().n(); ++i) v.values.push_back(i);
  auto got = dec.decrypt(ev.swap_rows(enc.encrypt(v, prg), km.rotations)).values;
  const std::size_t half = rp().n() / 2;
  for (std::size_t i = 0; i < rp().n(); ++i) ASSERT_EQ(got[i], (i + half) % rp().n());
}

TEST_F(Pahe, FreshEncryptionsDiffer) {
  std::mt19937_64 rng(8);
  auto x = random_plain(rng);
  EXPECT_NE(serialize(enc.encrypt(x, prg), rp()), serialize(enc.encrypt(x, prg), rp()));
}

TEST_F(Pahe, ExplicitSpectrumPathMatchesShortcut) {
  std::mt19937_64 rng(9);
  const BatchEncoder& be = ev.encoder();
  const NttTables& tp = rp().tables(ModulusId::p);
  auto u = random_plain(rng, Encoding::coefficients);
  PlainVector w{std::vector<u64>(rp().n(), 0), Encoding::coefficients};
  for (int k = 0; k < 9; ++k) w.values[rng() % rp().n()] = rng() % rp().p().value();

  // shortcut: coefficient encoding, product in the ring
  auto shortcut = dec.decrypt(ev.mul_plain(enc.encrypt(u, prg), w)).values;

  // explicit: transform, place the spectrum into slots, slot-wise product
  auto uhat = u.values, what = w.values;
  tp.forward(uhat, NttStyle::negacyclic);
  tp.forward(what, NttStyle::negacyclic);
  PlainVector us{be.spectrum_to_slots(uhat), Encoding::slots};
  PlainVector ws{be.spectrum_to_slots(what), Encoding::slots};
  auto vs = dec.decrypt(ev.mul_plain(enc.encrypt(us, prg), ws)).values;
  auto vhat = be.slots_to_spectrum(vs);
  tp.inverse(vhat, NttStyle::negacyclic);
  EXPECT_EQ(vhat, shortcut);

  // and the encryptions themselves decode to the same polynomial
  auto direct = dec.decrypt(enc.encrypt(u, prg)).values;
  auto via_slots = be.slots_to_spectrum(dec.decrypt(enc.encrypt(us, prg)).values);
  tp.inverse(via_slots, NttStyle::negacyclic);
  EXPECT_EQ(direct, via_slots);
}

TEST_F(Pahe, NoiseEstimateIsConservative) {
  std::mt19937_64 rng(10);
  auto x = random_plain(rng);
  auto c = enc.encrypt(x, prg);
  EXPECT_LE(dec.measure_noise(c), c.noise_bits + 1e-9);
  auto y = ev.mul_plain(c, random_plain(rng));
  EXPECT_LE(dec.measure_noise(y), y.noise_bits);
  auto z = ev.rot(y, 3, km.rotations);
  EXPECT_LE(dec.measure_noise(z), z.noise_bits);
  auto s = ev.add(z, ev.rot(z, 5, km.rotations));
  EXPECT_LE(dec.measure_noise(s), s.noise_bits);
  EXPECT_GT(ev.noise_budget(s), 0.0);
  EXPECT_GE(s.noise_bits, y.noise_bits);
}

TEST_F(Pahe, ExhaustedBudgetShowsAsMismatch) {
  std::mt19937_64 rng(11);
  auto x = random_plain(rng);
  auto c = enc.encrypt(x, prg);
  int rounds = 0;
  while (ev.noise_budget(c) > 0 && rounds < 10) {
    c = ev.mul_plain(c, random_plain(rng));
    ++rounds;
  }
  EXPECT_LE(ev.noise_budget(c), 0.0);
  // once the estimate is gone the plaintext is no longer recoverable
  auto got = dec.decrypt(c).values;
  EXPECT_GT(dec.measure_noise(c), std::log2(static_cast<double>(rp().q().value() / rp().p().value()) / 2) - 1);
  (void)got;
}

TEST_F(Pahe, SerializationRoundtrip) {
  std::mt19937_64 rng(12);
  auto x = random_plain(rng);
  auto c = ev.mul_plain(enc.encrypt(x, prg), random_plain(rng));
  auto bytes = serialize(c, rp());
  EXPECT_EQ(bytes.size(), 14 + 2 * 8 * rp().n());
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "BUN1");
  auto back = deserialize_ciphertext(bytes, rp());
  EXPECT_EQ(dec.decrypt(back).values, dec.decrypt(c).values);
  EXPECT_EQ(serialize(back, rp()), bytes);

  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(deserialize_ciphertext(bad, rp()), FormatError);
  bad = bytes;
  bad.pop_back();
  EXPECT_THROW(deserialize_ciphertext(bad, rp()), FormatError);
  bad = bytes;
  for (int i = 0; i < 8; ++i) bad[14 + i] = 0xff;
  EXPECT_THROW(deserialize_ciphertext(bad, rp()), FormatError);
}

TEST_F(Pahe, RotationKeysSerialize) {
  auto bytes = serialize(km.rotations, rp());
  auto back = deserialize_rotation_keys(bytes, rp());
  EXPECT_EQ(back.steps, km.rotations.steps);
  std::mt19937_64 rng(13);
  auto x = random_plain(rng);
  EXPECT_EQ(dec.decrypt(ev.rot(enc.encrypt(x, prg), 2, back)).values, rotate_rows(x.values, 2));
}
