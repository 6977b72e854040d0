#include <gtest/gtest.h>

#include <future>
#include <thread>

#include "bunet/runtime.hpp"
#include "json.hpp"

using namespace bunet;

namespace {

const RingParams& P() { return RingParams::standard(); }

struct Fixture {
  NetworkSpec spec;
  NetworkWeights w;
  Tensor input;
};

Fixture tiny2d(Variant v, u64 seed, std::size_t base = 4) {
  Fixture f;
  f.spec = build_unet_architecture(Shape{1, 1, 16, 16}, 3, v, {}, base);
  f.spec.name = "tiny2d";
  f.w = gen_synthetic_weights(f.spec, seed);
  calibrate(f.spec, f.w, gen_synthetic_input(f.spec, seed + 1), P().p());
  f.input = gen_synthetic_input(f.spec, seed + 2);
  return f;
}

DualRunOptions opts(u64 seed, TruncMode m = TruncMode::exact) {
  DualRunOptions o;
  o.alice.seed = seed;
  o.bob.seed = seed + 1000;
  o.alice.trunc = o.bob.trunc = m;
  return o;
}

}  // namespace

TEST(Handshake, RoundTrip) {
  Handshake h;
  h.spec_hash[0] = 9;
  h.dealer_commitment[31] = 4;
  const Handshake g = deserialize_handshake(serialize(h));
  EXPECT_EQ(g.version, kProtocolVersion);
  EXPECT_EQ(g.spec_hash, h.spec_hash);
  EXPECT_EQ(g.dealer_commitment, h.dealer_commitment);
  auto bytes = serialize(h);
  bytes.pop_back();
  EXPECT_THROW(deserialize_handshake(bytes), FormatError);
}

TEST(Keys, FileRoundTripDecrypts) {
  const Fixture f = tiny2d(Variant::relu_avg, 12, 2);
  const KeyMaterial k = keygen_for(f.spec, P(), 4);
  const KeyMaterial l = deserialize_keys(serialize(k, P()), P());
  EXPECT_EQ(l.sk.s.coeffs, k.sk.s.coeffs);
  EXPECT_EQ(l.pk.p1_eval, k.pk.p1_eval);
  EXPECT_EQ(l.rotations.steps, k.rotations.steps);
  // the reloaded keys drive a full run
  auto o = opts(3);
  o.keys = l;
  EXPECT_EQ(run_in_process(f.spec, f.w, f.input, o).alice.labels,
            oracle_infer(f.spec, f.w, f.input, TruncMode::exact, P().p()).labels);
}

TEST(Runtime, ExactMatchesOracle) {
  for (Variant v : {Variant::baseline, Variant::hybrid}) {
    const Fixture f = tiny2d(v, 11);
    const auto r = run_in_process(f.spec, f.w, f.input, opts(3));
    const auto o = oracle_infer(f.spec, f.w, f.input, TruncMode::exact, P().p());
    EXPECT_EQ(r.alice.labels, o.labels) << variant_name(v);
    EXPECT_TRUE(r.bob.labels.empty());
    EXPECT_EQ(r.alice.receipt.size(), 64u);
    EXPECT_EQ(r.alice.receipt, r.bob.receipt);
    // logit shares reconstruct the oracle logits
    ASSERT_EQ(r.alice.logits.size(), o.logits.size());
    for (std::size_t i = 0; i < o.logits.size(); ++i)
      ASSERT_EQ(P().p().to_signed(P().p().add(r.alice.logits.values[i], r.bob.logits.values[i])), o.logits.data[i]);
  }
}

TEST(Runtime, ProbModeStaysWithinOneLsbPerTruncation) {
  const Fixture f = tiny2d(Variant::square, 21);
  Trace trace;
  auto o = opts(5, TruncMode::prob);
  o.alice.trace = o.bob.trace = &trace;
  const auto r = run_in_process(f.spec, f.w, f.input, o);
  // the calibrated-range assumption holds on this input
  EXPECT_NO_THROW(oracle_infer(f.spec, f.w, f.input, TruncMode::prob, P().p()));
  EXPECT_EQ(r.alice.labels.size(), f.spec.input.spatial());
  // each truncation is within one of the floor of its own input
  const auto ra = trace.records(Role::alice), rb = trace.records(Role::bob);
  ASSERT_EQ(ra.size(), rb.size());
  ASSERT_FALSE(ra.empty());
  const Modulus& p = P().p();
  for (std::size_t k = 0; k < ra.size(); ++k) {
    if (ra[k].op != "trunc") continue;
    for (std::size_t i = 0; i < ra[k].input.size(); ++i) {
      const i64 in = p.to_signed(p.add(ra[k].input[i], rb[k].input[i]));
      const i64 out = p.to_signed(p.add(ra[k].output[i], rb[k].output[i]));
      const i64 fl = in >= 0 ? in >> ra[k].shift : -((-in + (i64{1} << ra[k].shift) - 1) >> ra[k].shift);
      ASSERT_LE(std::abs(out - fl), 1) << ra[k].layer << " " << in << " -> " << out;
    }
  }
}

TEST(Runtime, DeterministicForFixedSeeds) {
  const Fixture f = tiny2d(Variant::relu_avg, 31);
  const auto a = run_in_process(f.spec, f.w, f.input, opts(8));
  const auto b = run_in_process(f.spec, f.w, f.input, opts(8));
  const auto c = run_in_process(f.spec, f.w, f.input, opts(9));
  EXPECT_EQ(a.alice.labels, b.alice.labels);
  EXPECT_EQ(a.alice.receipt, b.alice.receipt);
  EXPECT_EQ(a.alice.labels, c.alice.labels);
  EXPECT_NE(a.alice.receipt, c.alice.receipt);
}

TEST(Runtime, SpecMismatchAbortsBeforePayload) {
  const Fixture f = tiny2d(Variant::baseline, 41);
  NetworkSpec other = f.spec;
  other.layers[1].shift += 1;
  auto [ta, tb] = mem_pair();
  Session sa(Role::alice, *ta, P(), {});
  Session sb(Role::bob, *tb, P(), SessionOptions{.seed = 2});
  auto bob = std::async(std::launch::async, [&] { return run_secure_inference(sb, other, nullptr, &f.w); });
  EXPECT_THROW(run_secure_inference(sa, f.spec, &f.input, nullptr), Error);
  EXPECT_THROW(bob.get(), ProtocolAbort);
  EXPECT_LE(sa.channel().frames_sent(), 1u);
}

TEST(Runtime, DealerMismatchAborts) {
  const Fixture f = tiny2d(Variant::baseline, 42);
  auto o = opts(1);
  o.bob.dealer_seed = o.alice.dealer_seed + 1;
  EXPECT_THROW(run_in_process(f.spec, f.w, f.input, o), Error);
}

TEST(Runtime, TamperedFrameAborts) {
  const Fixture f = tiny2d(Variant::relu_avg, 51, 2);
  for (u64 target : {2u, 7u, 30u}) {
    auto o = opts(1);
    o.configure = [target](MemTransport& a, MemTransport&) {
      a.set_tamper([target](u64 idx, std::vector<u8>& fr) {
        if (idx == target) fr[fr.size() / 2] ^= 0x10;
      });
    };
    EXPECT_THROW(run_in_process(f.spec, f.w, f.input, o), Error) << target;
  }
}

TEST(Runtime, TcpMatchesInProcess) {
  const Fixture f = tiny2d(Variant::baseline, 61, 2);
  TcpListener listener("127.0.0.1:0");
  const std::string addr = "127.0.0.1:" + std::to_string(listener.port());
  auto bob = std::async(std::launch::async, [&] {
    auto t = listener.accept();
    Session s(Role::bob, *t, P(), SessionOptions{.seed = 1001});
    return run_secure_inference(s, f.spec, nullptr, &f.w);
  });
  auto t = TcpTransport::connect(addr);
  Session s(Role::alice, *t, P(), SessionOptions{.seed = 1});
  const auto a = run_secure_inference(s, f.spec, &f.input, nullptr);
  const auto b = bob.get();
  EXPECT_EQ(a.receipt, b.receipt);
  EXPECT_EQ(a.labels, oracle_infer(f.spec, f.w, f.input, TruncMode::exact, P().p()).labels);
}

TEST(Runtime, RejectsBadInputs) {
  Fixture f = tiny2d(Variant::baseline, 71, 2);
  f.input.data[0] = 500;
  EXPECT_THROW(run_in_process(f.spec, f.w, f.input, opts(1)), Error);
  Fixture g = tiny2d(Variant::baseline, 71, 2);
  g.w.convs.pop_back();
  EXPECT_THROW(run_in_process(g.spec, g.w, g.input, opts(1)), Error);
}

TEST(Report, SharesSumToHundred) {
  const Fixture f = tiny2d(Variant::hybrid, 81, 2);
  const auto r = run_in_process(f.spec, f.w, f.input, opts(2));
  const auto rep = timing_report(r.ledger, f.spec, {{"seed", "2"}});
  const auto j = nlohmann::json::parse(rep.json);
  double pct = 0;
  for (const auto& p : j["primitives"]) pct += p["percent"].get<double>();
  EXPECT_NEAR(pct, 100.0, 1e-6);
  EXPECT_EQ(j["meta"]["seed"], "2");
  EXPECT_GT(r.ledger.at(Category::relu_gc).instances, 0u);
  EXPECT_GT(r.ledger.at(Category::square_mt).instances, 0u);
  EXPECT_FALSE(j["batches"].empty());
  EXPECT_NE(rep.text.find("relu_gc"), std::string::npos);
}
