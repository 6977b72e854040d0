#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "bunet/unet.hpp"

using namespace bunet;

namespace {

const Modulus& pm() { return RingParams::standard().p(); }

NetworkSpec scaled3d(Variant v = Variant::baseline) {
  return build_unet_architecture(Shape{1, 8, 8, 8}, 3, v, {}, 4);
}

NetworkSpec calibrated(Variant v, const Shape& in, u64 seed, NetworkWeights& w) {
  NetworkSpec s = build_unet_architecture(in, 3, v, {}, 4);
  w = gen_synthetic_weights(s, seed);
  calibrate(s, w, gen_synthetic_input(s, seed + 1), pm());
  return s;
}

}  // namespace

TEST(Architecture, FullSizeActivationCounts) {
  const NetworkSpec s = build_unet_architecture(Shape{1, 64, 64, 64}, 3, Variant::baseline);
  EXPECT_EQ(activation_counts(s),
            (std::vector<u64>{33554432, 8388608, 2097152, 524288, 2097152, 8388608, 33554432}));
}

TEST(Architecture, FullSizeCensusFollowsTable) {
  const NetworkSpec s = build_unet_architecture(Shape{1, 64, 64, 64}, 3, Variant::baseline);
  const Census c = census(s);
  EXPECT_EQ(c.transposed, 3u);
  EXPECT_EQ(c.convs, 18u);  // 15 regular (incl. the final one) plus 3 transposed rows
  EXPECT_EQ(c.activations, 14u);
  EXPECT_EQ(c.pools, 3u);
  EXPECT_EQ(c.argmax, 1u);
}

TEST(Architecture, Batch4Dims) {
  const NetworkSpec s = build_unet_architecture(Shape{1, 64, 64, 64}, 3, Variant::baseline);
  const auto it = std::find_if(s.layers.begin(), s.layers.end(), [](const Layer& l) { return l.name == "b4.conv1"; });
  ASSERT_NE(it, s.layers.end());
  EXPECT_EQ(it->in, (Shape{256, 8, 8, 8}));
  EXPECT_EQ(it->out, (Shape{512, 8, 8, 8}));
  EXPECT_EQ(it->kernel.taps(), 27u);
}

TEST(Architecture, ScaledCounts) {
  EXPECT_EQ(activation_counts(scaled3d()).front(), 2u * 4 * 512);
  const NetworkSpec s2 = build_unet_architecture(Shape{1, 1, 16, 16}, 3, Variant::hybrid, {}, 4);
  EXPECT_EQ(activation_counts(s2).size(), 7u);
  EXPECT_EQ(s2.layers.back().out, (Shape{1, 1, 16, 16}));
}

TEST(Architecture, VariantsSelectKinds) {
  for (Variant v : {Variant::baseline, Variant::relu_avg, Variant::hybrid, Variant::square}) {
    const NetworkSpec s = scaled3d(v);
    for (const Layer& l : s.layers) {
      if (l.kind == LayerKind::pool) {
        EXPECT_EQ(l.pool, v == Variant::baseline ? PoolKind::max : PoolKind::avg);
      }
      if (l.kind == LayerKind::activation) {
        const bool sq = v == Variant::square || (v == Variant::hybrid && (l.batch == 1 || l.batch == 7));
        EXPECT_EQ(l.act, sq ? ActKind::square : ActKind::relu) << l.name;
      }
    }
  }
}

TEST(Architecture, RejectsIncompatibleDims) {
  EXPECT_THROW(build_unet_architecture(Shape{1, 8, 12, 8}, 3, Variant::baseline), ParamError);
  NetworkSpec s = scaled3d();
  s.layers[3].out.c = 5;
  EXPECT_THROW(s.validate(), ParamError);
}

TEST(Spec, JsonRoundTrip) {
  NetworkSpec s = scaled3d(Variant::hybrid);
  s.layers[1].shift = 5;
  const NetworkSpec t = spec_from_json(to_json(s));
  EXPECT_EQ(t.layers, s.layers);
  EXPECT_EQ(t.hash(), s.hash());
  s.layers[1].shift = 6;
  EXPECT_NE(t.hash(), s.hash());
  EXPECT_THROW(spec_from_json("{\"layers\": 3"), FormatError);
}

TEST(Weights, Quantization) {
  const std::vector<double> w{0.0, 1.0, -0.5, 0.498};
  EXPECT_EQ(quantize_weights(w, 8, 16), (std::vector<i64>{0, 256, -128, 127}));
  EXPECT_THROW(quantize_weights(std::vector<double>{1.0}, 8, 8), ParamError);
  std::vector<double> r;
  for (int i = 0; i < 1000; ++i) r.push_back(std::sin(i * 0.37) * 3.0);
  const auto q = quantize_weights(r, 10, 16);
  for (std::size_t i = 0; i < r.size(); ++i) EXPECT_LE(std::fabs(q[i] / 1024.0 - r[i]), 1.0 / 2048 + 1e-12);
}

TEST(Weights, SyntheticDeterministicAndBounded) {
  const NetworkSpec s = scaled3d();
  const auto a = gen_synthetic_weights(s, 5), b = gen_synthetic_weights(s, 5), c = gen_synthetic_weights(s, 6);
  ASSERT_EQ(a.convs.size(), s.weight_count());
  EXPECT_EQ(a.convs[3].w, b.convs[3].w);
  EXPECT_NE(a.convs[3].w, c.convs[3].w);
  check_weights(s, a);
  const auto path = std::filesystem::temp_directory_path() / "bunet_w.bunt";
  save_weights(path, a);
  const auto l = load_weights(path, s);
  for (std::size_t i = 0; i < a.convs.size(); ++i) {
    EXPECT_EQ(l.convs[i].w, a.convs[i].w);
    EXPECT_EQ(l.convs[i].bias, a.convs[i].bias);
  }
  std::filesystem::remove(path);
}

TEST(Analyzer, CalibratedScaledNetsFit) {
  for (TruncMode m : {TruncMode::exact, TruncMode::prob}) {
    for (Variant v : {Variant::baseline, Variant::relu_avg, Variant::hybrid, Variant::square}) {
      for (const Shape in : {Shape{1, 8, 8, 8}, Shape{1, 1, 16, 16}}) {
        NetworkWeights w;
        const AnalysisReport r = analyze(calibrated(v, in, 8, w), pm(), m);
        EXPECT_TRUE(r.ok()) << variant_name(v) << " " << to_string(in) << ": "
                            << (r.violations.empty() ? "" : r.violations.front());
      }
    }
  }
}

TEST(Analyzer, UncalibratedUpsamplingOverflows) {
  // without a shift the transposed-conv output feeds the next conv at full width
  EXPECT_FALSE(analyze(scaled3d(), pm(), TruncMode::exact).ok());
}

TEST(Analyzer, FullSizeOverflowsTwentyBits) {
  const NetworkSpec s = build_unet_architecture(Shape{1, 64, 64, 64}, 3, Variant::baseline);
  const AnalysisReport r = analyze(s, pm(), TruncMode::exact);
  EXPECT_FALSE(r.ok());
  EXPECT_THROW(require_sound(s, pm(), TruncMode::exact), ParamError);
}

TEST(Oracle, DeltaNetworkIsIdentity) {
  // conv with a centred delta filter, relu without shift, 2 labels
  NetworkSpec s;
  s.input = Shape{2, 1, 3, 3};
  s.labels = 2;
  Layer c;
  c.kind = LayerKind::conv;
  c.name = "c";
  c.in = c.out = s.input;
  c.cout = 2;
  c.kernel = Kernel::same(1, 3, 3);
  c.weight_index = 0;
  Layer a;
  a.kind = LayerKind::argmax;
  a.name = "a";
  a.in = s.input;
  a.out = Shape{1, 1, 3, 3};
  s.layers = {c, a};
  NetworkWeights w;
  ConvWeights cw{2, 2, c.kernel, std::vector<i64>(2 * 2 * 9, 0), {0, 0}};
  cw.w[(0 * 2 + 0) * 9 + 4] = 1;
  cw.w[(1 * 2 + 1) * 9 + 4] = 1;
  w.convs.push_back(cw);
  Tensor in(s.input.dims(), {1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 8, 7, 6, 5, 4, 3, 2, 1});
  const auto r = oracle_infer(s, w, in, TruncMode::exact, pm());
  EXPECT_EQ(r.logits.data, in.data);
  EXPECT_EQ(r.labels, (std::vector<u32>{1, 1, 1, 1, 0, 0, 0, 0, 0}));
}

TEST(Oracle, HandCheckedConvRelu) {
  // 1x2x2 input, 3x3 all-ones filter (same padding) then relu >> 1.
  NetworkSpec s;
  s.input = Shape{1, 1, 2, 2};
  s.labels = 2;
  Layer c;
  c.kind = LayerKind::conv;
  c.name = "c";
  c.in = s.input;
  c.out = Shape{2, 1, 2, 2};
  c.cout = 2;
  c.kernel = Kernel::same(1, 3, 3);
  c.weight_index = 0;
  Layer r;
  r.kind = LayerKind::activation;
  r.name = "r";
  r.in = r.out = c.out;
  r.shift = 1;
  Layer a;
  a.kind = LayerKind::argmax;
  a.name = "a";
  a.in = c.out;
  a.out = Shape{1, 1, 2, 2};
  s.layers = {c, r, a};
  NetworkWeights w;
  std::vector<i64> f(18, 1);
  for (int i = 9; i < 18; ++i) f[i] = -1;
  w.convs.push_back(ConvWeights{2, 1, c.kernel, f, {3, 0}});
  Tensor in(s.input.dims(), {1, -2, 3, 4});
  const auto o = oracle_infer(s, w, in, TruncMode::exact, pm());
  // channel 0: 6 + 3 = 9 -> 4; channel 1: -6 -> 0
  EXPECT_EQ(o.intermediates[1].data, (std::vector<i64>{4, 4, 4, 4, 0, 0, 0, 0}));
  EXPECT_EQ(o.labels, (std::vector<u32>{0, 0, 0, 0}));
}

TEST(Oracle, ScaledIntermediatesChain) {
  NetworkWeights w;
  const NetworkSpec s = calibrated(Variant::baseline, Shape{1, 8, 8, 8}, 3, w);
  const auto r = oracle_infer(s, w, gen_synthetic_input(s, 99), TruncMode::exact, pm());
  ASSERT_EQ(r.intermediates.size(), s.layers.size());
  for (std::size_t i = 0; i < s.layers.size(); ++i) EXPECT_EQ(r.intermediates[i].dims, s.layers[i].out.dims());
  EXPECT_EQ(r.labels.size(), 512u);
}

TEST(Calibration, ShiftsKeepActivationsInRange) {
  for (Variant v : {Variant::baseline, Variant::hybrid, Variant::square}) {
    NetworkWeights w;
    const NetworkSpec s = calibrated(v, Shape{1, 8, 8, 8}, 4, w);
    const auto r = oracle_infer(s, w, gen_synthetic_input(s, 4 + 1), TruncMode::exact, pm());
    for (std::size_t i = 0; i < s.layers.size(); ++i) {
      if (s.layers[i].kind != LayerKind::activation || s.layers[i].act != ActKind::relu) continue;
      i64 m = 0;
      for (i64 x : r.intermediates[i].data) m = std::max(m, x);
      EXPECT_LT(m, 127) << s.layers[i].name;  // headroom leaves the clamp idle
      EXPECT_GT(m, 0) << s.layers[i].name;
    }
    // labels are not degenerate
    std::set<u32> seen(r.labels.begin(), r.labels.end());
    EXPECT_GE(seen.size(), 2u) << variant_name(v);
  }
}

TEST(RotationSteps, PoolingPlans) {
  const auto steps = rotation_steps(scaled3d(Variant::relu_avg), 2048);
  for (std::size_t s : {1, 8, 64}) EXPECT_TRUE(steps.count(s)) << s;
  EXPECT_TRUE(rotation_steps(scaled3d(Variant::baseline), 2048).empty());
}
