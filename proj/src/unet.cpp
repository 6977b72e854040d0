#include "bunet/unet.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

#include "bunet/mpc.hpp"

namespace bunet {

using nlohmann::json;

const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::activation: return "activation";
    case LayerKind::quantize: return "quantize";
    case LayerKind::pool: return "pool";
    case LayerKind::tconv: return "transposed-conv";
    case LayerKind::concat_source: return "concat-source";
    case LayerKind::concat_sink: return "concat-sink";
    case LayerKind::argmax: return "argmax";
  }
  return "unknown";
}

const char* pool_kind_name(PoolKind k) { return k == PoolKind::avg ? "avg" : "max"; }

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::baseline: return "baseline";
    case Variant::relu_avg: return "relu-avg";
    case Variant::hybrid: return "hybrid";
    case Variant::square: return "square";
  }
  return "unknown";
}

LayerKind parse_layer_kind(const std::string& s) {
  for (LayerKind k : {LayerKind::conv, LayerKind::activation, LayerKind::quantize, LayerKind::pool, LayerKind::tconv,
                      LayerKind::concat_source, LayerKind::concat_sink, LayerKind::argmax})
    if (s == layer_kind_name(k)) return k;
  throw FormatError("unknown layer kind \"" + s + "\"");
}

Variant parse_variant(const std::string& s) {
  for (Variant v : {Variant::baseline, Variant::relu_avg, Variant::hybrid, Variant::square})
    if (s == variant_name(v)) return v;
  throw ParamError("unknown variant \"" + s + "\" (baseline, relu-avg, hybrid, square)");
}

// ---- spec --------------------------------------------------------------------

namespace {

[[noreturn]] void chain_error(const Layer& l, const std::string& what) {
  throw ParamError("layer " + l.name + ": " + what);
}

}  // namespace

void NetworkSpec::validate() const {
  if (layers.empty()) throw ParamError("empty network");
  if (input.volume() == 0) throw ParamError("empty input shape");
  Shape cur = input;
  std::map<int, Shape> slots;
  int next_weight = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Layer& l = layers[i];
    if (!(l.in == cur)) chain_error(l, "input " + to_string(l.in) + " does not follow " + to_string(cur));
    Shape want = l.in;
    switch (l.kind) {
      case LayerKind::conv:
        if (l.kernel.kd % 2 == 0 || l.kernel.kh % 2 == 0 || l.kernel.kw % 2 == 0 ||
            !(l.kernel == Kernel::same(l.kernel.kd, l.kernel.kh, l.kernel.kw)))
          chain_error(l, "convolutions must be same-padded with odd kernels");
        want.c = l.cout;
        break;
      case LayerKind::tconv:
        if (l.kernel.od || l.kernel.oh || l.kernel.ow) chain_error(l, "transposed kernels have origin 0");
        want = Shape{l.cout, l.in.d * l.kernel.kd, l.in.h * l.kernel.kh, l.in.w * l.kernel.kw};
        break;
      case LayerKind::activation:
      case LayerKind::quantize:
      case LayerKind::concat_source:
        if (l.shift < 0 || l.shift > 40) chain_error(l, "shift out of range");
        break;
      case LayerKind::pool:
        if (l.zd == 0 || l.zh == 0 || l.zw == 0 || l.in.d % l.zd || l.in.h % l.zh || l.in.w % l.zw)
          chain_error(l, "pooling window does not divide " + to_string(l.in));
        want = Shape{l.in.c, l.in.d / l.zd, l.in.h / l.zh, l.in.w / l.zw};
        break;
      case LayerKind::concat_sink: {
        auto it = slots.find(l.slot);
        if (it == slots.end()) chain_error(l, "concat slot " + std::to_string(l.slot) + " was never filled");
        if (it->second.spatial() != l.in.spatial() || it->second.d != l.in.d || it->second.h != l.in.h)
          chain_error(l, "skip connection " + to_string(it->second) + " does not match " + to_string(l.in));
        want.c = it->second.c + l.in.c;
        slots.erase(it);
        break;
      }
      case LayerKind::argmax:
        if (i + 1 != layers.size()) chain_error(l, "argmax must be the last layer");
        if (l.in.c != labels) chain_error(l, "argmax over " + std::to_string(l.in.c) + " channels, expected labels");
        want.c = 1;
        break;
    }
    if (l.kind == LayerKind::conv || l.kind == LayerKind::tconv) {
      if (l.cout == 0) chain_error(l, "no output channels");
      if (l.weight_index != next_weight++) chain_error(l, "weight indices must follow layer order");
    }
    if (l.kind == LayerKind::concat_source) slots[l.slot] = l.in;
    if (!(l.out == want)) chain_error(l, "output " + to_string(l.out) + ", expected " + to_string(want));
    cur = l.out;
  }
  if (layers.back().kind != LayerKind::argmax) throw ParamError("network must end in argmax");
}

std::size_t NetworkSpec::weight_count() const {
  return static_cast<std::size_t>(std::count_if(layers.begin(), layers.end(), [](const Layer& l) {
    return l.kind == LayerKind::conv || l.kind == LayerKind::tconv;
  }));
}

Digest NetworkSpec::hash() const { return sha256(to_json(*this)); }

namespace {

json shape_json(const Shape& s) { return json::array({s.c, s.d, s.h, s.w}); }

Shape shape_from(const json& j) {
  if (!j.is_array() || j.size() != 4) throw FormatError("shape must be [c, d, h, w]");
  return Shape{j[0].get<std::size_t>(), j[1].get<std::size_t>(), j[2].get<std::size_t>(), j[3].get<std::size_t>()};
}

}  // namespace

std::string to_json(const NetworkSpec& spec) {
  json j;
  j["name"] = spec.name;
  j["input"] = shape_json(spec.input);
  j["labels"] = spec.labels;
  j["variant"] = variant_name(spec.variant);
  j["quant"] = {{"weight_bits", spec.quant.weight_bits},
                {"act_bits", spec.quant.act_bits},
                {"weight_frac", spec.quant.weight_frac},
                {"bias_max", spec.quant.bias_max},
                {"headroom", spec.quant.headroom}};
  json layers = json::array();
  for (const Layer& l : spec.layers) {
    json r;
    r["batch"] = l.batch;
    r["type"] = layer_kind_name(l.kind);
    r["name"] = l.name;
    r["input"] = shape_json(l.in);
    r["output"] = shape_json(l.out);
    switch (l.kind) {
      case LayerKind::conv:
      case LayerKind::tconv:
        r["filter"] = {{"cout", l.cout},
                       {"size", {l.kernel.kd, l.kernel.kh, l.kernel.kw}},
                       {"origin", {l.kernel.od, l.kernel.oh, l.kernel.ow}}};
        r["weights"] = l.weight_index;
        break;
      case LayerKind::activation:
        r["activation"] = act_kind_name(l.act);
        r["shift"] = l.shift;
        break;
      case LayerKind::quantize:
        r["shift"] = l.shift;
        break;
      case LayerKind::pool:
        r["pool"] = pool_kind_name(l.pool);
        r["window"] = {l.zd, l.zh, l.zw};
        break;
      case LayerKind::concat_source:
      case LayerKind::concat_sink:
        r["slot"] = l.slot;
        break;
      case LayerKind::argmax:
        break;
    }
    layers.push_back(std::move(r));
  }
  j["layers"] = std::move(layers);
  return j.dump(1);
}

NetworkSpec spec_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("network spec is not valid JSON: ") + e.what());
  }
  try {
    NetworkSpec s;
    s.name = j.value("name", "");
    s.input = shape_from(j.at("input"));
    s.labels = j.at("labels").get<std::size_t>();
    s.variant = parse_variant(j.at("variant").get<std::string>());
    const json& q = j.at("quant");
    s.quant.weight_bits = q.at("weight_bits").get<int>();
    s.quant.act_bits = q.at("act_bits").get<int>();
    s.quant.weight_frac = q.value("weight_frac", 0);
    s.quant.bias_max = q.value("bias_max", i64{127});
    s.quant.headroom = q.value("headroom", 4.0);
    for (const json& r : j.at("layers")) {
      Layer l;
      l.batch = r.at("batch").get<int>();
      l.kind = parse_layer_kind(r.at("type").get<std::string>());
      l.name = r.at("name").get<std::string>();
      l.in = shape_from(r.at("input"));
      l.out = shape_from(r.at("output"));
      if (r.contains("filter")) {
        const json& f = r["filter"];
        l.cout = f.at("cout").get<std::size_t>();
        const auto sz = f.at("size").get<std::vector<std::size_t>>();
        const auto org = f.at("origin").get<std::vector<int>>();
        if (sz.size() != 3 || org.size() != 3) throw FormatError("filter size and origin need 3 entries");
        l.kernel = Kernel{sz[0], sz[1], sz[2], org[0], org[1], org[2]};
        l.weight_index = r.at("weights").get<int>();
      }
      if (r.contains("activation")) {
        const auto a = r["activation"].get<std::string>();
        if (a != "relu" && a != "square") throw FormatError("unknown activation \"" + a + "\"");
        l.act = a == "relu" ? ActKind::relu : ActKind::square;
      }
      l.shift = r.value("shift", 0);
      if (r.contains("pool")) {
        const auto pk = r["pool"].get<std::string>();
        if (pk != "avg" && pk != "max") throw FormatError("unknown pooling \"" + pk + "\"");
        l.pool = pk == "avg" ? PoolKind::avg : PoolKind::max;
        const auto w = r.at("window").get<std::vector<std::size_t>>();
        if (w.size() != 3) throw FormatError("pool window needs 3 entries");
        l.zd = w[0];
        l.zh = w[1];
        l.zw = w[2];
      }
      l.slot = r.value("slot", 0);
      s.layers.push_back(std::move(l));
    }
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed network spec: ") + e.what());
  }
}

void save_spec(const std::filesystem::path& path, const NetworkSpec& spec) {
  const std::string text = to_json(spec) + "\n";
  write_file(path, std::span(reinterpret_cast<const u8*>(text.data()), text.size()));
}

NetworkSpec load_spec(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return spec_from_json(std::string(bytes.begin(), bytes.end()));
}

// ---- architecture ----------------------------------------------------------

NetworkSpec build_unet_architecture(const Shape& input, std::size_t labels, Variant variant,
                                        const QuantParams& quant, std::size_t base_channels) {
  if (input.d % 8 && input.d != 1) throw ParamError("depth must be 1 or divisible by 8");
  if (input.h % 8 || input.w % 8 || input.volume() == 0)
    throw ParamError("input " + to_string(input) + " must have spatial dims divisible by 8");
  if (labels < 2) throw ParamError("need at least two labels");
  if (base_channels == 0) throw ParamError("need at least one base channel");
  if (quant.act_bits < 2 || quant.weight_bits < 2) throw ParamError("bit widths must be at least 2");

  const bool volumetric = input.d > 1;
  const std::size_t sd = volumetric ? 2 : 1;
  const Kernel k3 = volumetric ? Kernel::same(3, 3, 3) : Kernel::same(1, 3, 3);
  const Kernel k2{sd, 2, 2, 0, 0, 0};
  const PoolKind pool = variant == Variant::baseline ? PoolKind::max : PoolKind::avg;
  const auto act_for = [&](int batch) {
    if (variant == Variant::square) return ActKind::square;
    if (variant == Variant::hybrid && (batch == 1 || batch == 7)) return ActKind::square;
    return ActKind::relu;
  };

  NetworkSpec s;
  s.name = std::string(volumetric ? "unet3d" : "unet2d") + "-" + variant_name(variant);
  s.input = input;
  s.labels = labels;
  s.variant = variant;
  s.quant = quant;
  Shape cur = input;
  int weights = 0;
  const auto push = [&](Layer l) {
    l.in = cur;
    s.layers.push_back(l);
    cur = l.out;
  };
  const auto conv = [&](int batch, const std::string& name, std::size_t cout) {
    Layer l;
    l.kind = LayerKind::conv;
    l.batch = batch;
    l.name = name;
    l.kernel = k3;
    l.cout = cout;
    l.weight_index = weights++;
    l.out = Shape{cout, cur.d, cur.h, cur.w};
    push(l);
  };
  const auto act_quant = [&](int batch, const std::string& suffix) {
    Layer a;
    a.kind = LayerKind::activation;
    a.batch = batch;
    a.name = "b" + std::to_string(batch) + ".act" + suffix;
    a.act = act_for(batch);
    a.out = cur;
    push(a);
    Layer q;
    q.kind = LayerKind::quantize;
    q.batch = batch;
    q.name = "b" + std::to_string(batch) + ".quant" + suffix;
    q.shift = a.act == ActKind::square ? quant.act_bits - 1 : 0;
    q.out = cur;
    push(q);
  };
  const auto double_conv = [&](int batch, std::size_t cout) {
    const std::string b = "b" + std::to_string(batch);
    conv(batch, b + ".conv1", cout);
    act_quant(batch, "1");
    conv(batch, b + ".conv2", cout);
    act_quant(batch, "2");
  };
  const auto tconv = [&](int batch, std::size_t cout) {
    const std::string b = "b" + std::to_string(batch);
    Layer l;
    l.kind = LayerKind::tconv;
    l.batch = batch;
    l.name = b + ".tconv";
    l.kernel = k2;
    l.cout = cout;
    l.weight_index = weights++;
    l.out = Shape{cout, cur.d * sd, cur.h * 2, cur.w * 2};
    push(l);
    Layer q;
    q.kind = LayerKind::quantize;
    q.batch = batch;
    q.name = b + ".tquant";
    q.out = cur;
    push(q);
  };
  const auto marker = [&](LayerKind kind, int batch, int slot, const std::string& name, std::size_t extra) {
    Layer l;
    l.kind = kind;
    l.batch = batch;
    l.name = name;
    l.slot = slot;
    l.out = Shape{cur.c + extra, cur.d, cur.h, cur.w};
    push(l);
  };

  std::vector<std::size_t> skip_channels;
  std::size_t ch = base_channels;
  for (int batch = 1; batch <= 3; ++batch, ch *= 2) {
    double_conv(batch, ch);
    marker(LayerKind::concat_source, batch, batch, "b" + std::to_string(batch) + ".skip", 0);
    skip_channels.push_back(ch);
    Layer p;
    p.kind = LayerKind::pool;
    p.batch = batch;
    p.name = "b" + std::to_string(batch) + ".pool";
    p.pool = pool;
    p.zd = sd;
    p.zh = p.zw = 2;
    p.out = Shape{cur.c, cur.d / sd, cur.h / 2, cur.w / 2};
    push(p);
  }
  double_conv(4, ch);
  tconv(4, ch / 2);
  for (int batch = 5; batch <= 7; ++batch) {
    const int slot = 8 - batch;
    marker(LayerKind::concat_sink, batch, slot, "b" + std::to_string(batch) + ".concat", skip_channels[slot - 1]);
    ch /= 2;
    double_conv(batch, ch);
    if (batch < 7) tconv(batch, ch / 2);
  }
  conv(8, "b8.conv", labels);
  Layer am;
  am.kind = LayerKind::argmax;
  am.batch = 9;
  am.name = "b9.argmax";
  am.out = Shape{1, cur.d, cur.h, cur.w};
  push(am);
  s.validate();
  return s;
}

Census census(const NetworkSpec& spec) {
  Census c;
  for (const Layer& l : spec.layers) {
    switch (l.kind) {
      case LayerKind::conv: ++c.convs; break;
      case LayerKind::tconv:
        ++c.convs;
        ++c.transposed;
        break;
      case LayerKind::activation: ++c.activations; break;
      case LayerKind::pool: ++c.pools; break;
      case LayerKind::argmax: ++c.argmax; break;
      default: break;
    }
  }
  return c;
}

std::vector<u64> activation_counts(const NetworkSpec& spec) {
  std::map<int, u64> per;
  for (const Layer& l : spec.layers)
    if (l.kind == LayerKind::activation) per[l.batch] += l.out.volume();
  std::vector<u64> out;
  for (const auto& [b, n] : per) out.push_back(n);
  return out;
}

// ---- weights -----------------------------------------------------------------

std::vector<i64> quantize_weights(std::span<const double> w, int frac, int bits) {
  if (bits < 2 || bits > 62 || frac < 0 || frac > 60) throw ParamError("unsupported fixed-point format");
  const i64 lim = (i64{1} << (bits - 1)) - 1;
  const double scale = std::ldexp(1.0, frac);
  std::vector<i64> out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!std::isfinite(w[i])) throw ParamError("weight " + std::to_string(i) + " is not finite");
    const double r = std::nearbyint(w[i] * scale);
    if (std::fabs(r) > static_cast<double>(lim))
      throw ParamError("weight " + std::to_string(i) + " overflows " + std::to_string(bits) + " bits");
    out[i] = static_cast<i64>(r);
  }
  return out;
}

namespace {

ConvWeights shape_weights(const Layer& l) {
  ConvWeights w;
  w.cout = l.cout;
  w.cin = l.in.c;
  w.kernel = l.kernel;
  return w;
}

}  // namespace

NetworkWeights gen_synthetic_weights(const NetworkSpec& spec, u64 seed) {
  Prg rng(seed, "bunet.weights");
  const i64 wm = spec.quant.w_max(), bm = spec.quant.bias_max;
  NetworkWeights out;
  for (const Layer& l : spec.layers) {
    if (l.kind != LayerKind::conv && l.kind != LayerKind::tconv) continue;
    ConvWeights w = shape_weights(l);
    w.w.resize(w.cout * w.cin * w.kernel.taps());
    for (auto& x : w.w) x = static_cast<i64>(rng.uniform(static_cast<u64>(2 * wm + 1))) - wm;
    w.bias.resize(w.cout);
    for (auto& b : w.bias) b = static_cast<i64>(rng.uniform(static_cast<u64>(2 * bm + 1))) - bm;
    out.convs.push_back(std::move(w));
  }
  return out;
}

void check_weights(const NetworkSpec& spec, const NetworkWeights& w) {
  if (w.convs.size() != spec.weight_count())
    throw ParamError("expected " + std::to_string(spec.weight_count()) + " weight sets, got " +
                     std::to_string(w.convs.size()));
  for (const Layer& l : spec.layers) {
    if (l.kind != LayerKind::conv && l.kind != LayerKind::tconv) continue;
    const ConvWeights& c = w.convs.at(static_cast<std::size_t>(l.weight_index));
    if (c.cout != l.cout || c.cin != l.in.c || !(c.kernel == l.kernel) || c.w.size() != c.cout * c.cin * l.kernel.taps())
      throw ParamError("weights for " + l.name + " do not match the layer");
    if (!c.bias.empty() && c.bias.size() != c.cout) throw ParamError("bias for " + l.name + " has the wrong length");
    for (i64 x : c.w)
      if (std::abs(x) > spec.quant.w_max()) throw ParamError("weight in " + l.name + " exceeds the weight width");
    for (i64 b : c.bias)
      if (std::abs(b) > spec.quant.bias_max) throw ParamError("bias in " + l.name + " exceeds the bias bound");
  }
}

void save_weights(const std::filesystem::path& path, const NetworkWeights& w) {
  std::vector<Tensor> ts;
  for (const ConvWeights& c : w.convs) {
    ts.emplace_back(std::vector<std::size_t>{c.cout, c.cin, c.kernel.kd, c.kernel.kh, c.kernel.kw}, c.w);
    std::vector<i64> b = c.bias;
    b.resize(c.cout, 0);
    ts.emplace_back(std::vector<std::size_t>{c.cout}, std::move(b));
  }
  write_tensors(path, ts);
}

NetworkWeights load_weights(const std::filesystem::path& path, const NetworkSpec& spec) {
  const auto ts = read_tensors(path);
  if (ts.size() != 2 * spec.weight_count())
    throw FormatError("weights file holds " + std::to_string(ts.size()) + " tensors, expected " +
                      std::to_string(2 * spec.weight_count()));
  NetworkWeights out;
  std::size_t i = 0;
  for (const Layer& l : spec.layers) {
    if (l.kind != LayerKind::conv && l.kind != LayerKind::tconv) continue;
    ConvWeights c = shape_weights(l);
    const Tensor& wt = ts[i++];
    const Tensor& bt = ts[i++];
    if (wt.dims != std::vector<std::size_t>{c.cout, c.cin, c.kernel.kd, c.kernel.kh, c.kernel.kw} ||
        bt.dims != std::vector<std::size_t>{c.cout})
      throw FormatError("weight tensors for " + l.name + " have the wrong dims");
    c.w = wt.data;
    c.bias = bt.data;
    out.convs.push_back(std::move(c));
  }
  check_weights(spec, out);
  return out;
}

Tensor gen_synthetic_input(const NetworkSpec& spec, u64 seed) {
  Prg rng(seed, "bunet.input");
  const i64 a = spec.quant.a_max();
  Tensor t(spec.input.dims());
  for (auto& v : t.data) v = static_cast<i64>(rng.uniform(static_cast<u64>(2 * a + 1))) - a;
  return t;
}

// ---- bounds ----------------------------------------------------------------

AnalysisReport analyze(const NetworkSpec& spec, const Modulus& p, TruncMode mode) {
  spec.validate();
  AnalysisReport rep;
  const u64 half = (p.value() - 1) / 2;
  const u64 a = static_cast<u64>(spec.quant.a_max());
  const u64 wm = static_cast<u64>(spec.quant.w_max());
  const u64 bm = static_cast<u64>(spec.quant.bias_max);
  std::map<int, u64> slots;
  u64 cur = a;
  const auto fits = [&](const Layer& l, u64 v, const char* what) {
    if (v > half)
      rep.violations.push_back(l.name + ": " + what + " bound " + std::to_string(v) + " exceeds (p-1)/2 = " +
                               std::to_string(half));
  };
  // exact mode clamps to a_max. Probabilistic truncation cannot clamp; its
  // outputs are assumed to stay within a_max, which calibration provides
  // with `headroom` margin and the oracle checks per element.
  const auto trunc_out = [&](u64 in, int f) -> u64 {
    return mode == TruncMode::prob && f == 0 ? in : a;
  };
  const auto prob_ok = [&](const Layer& l, u64 bound, int f) {
    if (mode != TruncMode::prob || f == 0) return;
    if (2 * trunc_bias(bound, f) >= p.value())
      rep.violations.push_back(l.name + ": probabilistic truncation bound " + std::to_string(bound) +
                               " leaves no room for the mask");
  };
  for (const Layer& l : spec.layers) {
    LayerBounds b;
    switch (l.kind) {
      case LayerKind::conv:
        b.out = cur * wm * l.kernel.taps() * l.in.c + bm;
        fits(l, b.out, "accumulator");
        break;
      case LayerKind::tconv:
        // stride equals the kernel, so each output sees one tap per channel
        b.out = cur * wm * l.in.c + bm;
        fits(l, b.out, "accumulator");
        break;
      case LayerKind::activation:
        b.trunc_in = cur;
        if (l.act == ActKind::relu) {
          b.out = a;
        } else {
          prob_ok(l, cur + 1, l.shift);
          const u64 t = trunc_out(cur, l.shift);
          b.square_in = t * t;
          b.out = b.square_in;
          fits(l, b.out, "square");
        }
        break;
      case LayerKind::quantize:
        b.trunc_in = cur;
        if (l.shift == 0) {
          b.out = cur;
        } else {
          prob_ok(l, cur + 1, l.shift);
          b.out = trunc_out(cur, l.shift);
        }
        break;
      case LayerKind::pool:
        b.out = l.pool == PoolKind::avg ? cur * l.zd * l.zh * l.zw : cur;
        fits(l, b.out, "window sum");
        break;
      case LayerKind::concat_source:
        slots[l.slot] = cur;
        b.out = cur;
        break;
      case LayerKind::concat_sink:
        b.out = std::max(cur, slots[l.slot]);
        break;
      case LayerKind::argmax:
        b.out = spec.labels - 1;
        break;
    }
    rep.layers.push_back(b);
    cur = b.out;
  }
  return rep;
}

AnalysisReport require_sound(const NetworkSpec& spec, const Modulus& p, TruncMode mode) {
  AnalysisReport r = analyze(spec, p, mode);
  if (!r.ok()) {
    std::string msg = "quantization does not fit the plaintext modulus:";
    for (const auto& v : r.violations) msg += "\n  " + v;
    throw ParamError(msg);
  }
  return r;
}

// ---- plaintext pipeline ----------------------------------------------------

namespace {

i64 floor_shift(i64 v, int f) { return v >= 0 ? v >> f : -((-v + (i64{1} << f) - 1) >> f); }

std::vector<i64> conv_direct(const std::vector<i64>& x, const Shape& in, const ConvWeights& w) {
  const Kernel& k = w.kernel;
  const Shape out{w.cout, in.d, in.h, in.w};
  std::vector<i64> y(out.volume(), 0);
  for (std::size_t co = 0; co < w.cout; ++co) {
    i64* yc = y.data() + co * in.spatial();
    const i64 bias = w.bias.empty() ? 0 : w.bias[co];
    std::fill(yc, yc + in.spatial(), bias);
    for (std::size_t ci = 0; ci < w.cin; ++ci)
      for (std::size_t a = 0; a < k.kd; ++a)
        for (std::size_t b = 0; b < k.kh; ++b)
          for (std::size_t c = 0; c < k.kw; ++c) {
            const i64 wt = w.at(co, ci, (a * k.kh + b) * k.kw + c);
            if (wt == 0) continue;
            const long dz = static_cast<long>(a) + k.od, dy = static_cast<long>(b) + k.oh,
                       dx = static_cast<long>(c) + k.ow;
            for (std::size_t z = 0; z < in.d; ++z) {
              const long zz = static_cast<long>(z) + dz;
              if (zz < 0 || zz >= static_cast<long>(in.d)) continue;
              for (std::size_t r = 0; r < in.h; ++r) {
                const long rr = static_cast<long>(r) + dy;
                if (rr < 0 || rr >= static_cast<long>(in.h)) continue;
                for (std::size_t q = 0; q < in.w; ++q) {
                  const long qq = static_cast<long>(q) + dx;
                  if (qq < 0 || qq >= static_cast<long>(in.w)) continue;
                  yc[(z * in.h + r) * in.w + q] += wt * x[in.index(ci, zz, rr, qq)];
                }
              }
            }
          }
  }
  return y;
}

std::vector<i64> tconv_direct(const std::vector<i64>& x, const Shape& in, const ConvWeights& w) {
  const Kernel& k = w.kernel;
  const Shape out{w.cout, in.d * k.kd, in.h * k.kh, in.w * k.kw};
  std::vector<i64> y(out.volume(), 0);
  for (std::size_t co = 0; co < w.cout; ++co) {
    const i64 bias = w.bias.empty() ? 0 : w.bias[co];
    std::fill(y.begin() + static_cast<long>(co * out.spatial()), y.begin() + static_cast<long>((co + 1) * out.spatial()),
              bias);
    for (std::size_t ci = 0; ci < w.cin; ++ci)
      for (std::size_t z = 0; z < in.d; ++z)
        for (std::size_t r = 0; r < in.h; ++r)
          for (std::size_t q = 0; q < in.w; ++q) {
            const i64 v = x[in.index(ci, z, r, q)];
            for (std::size_t a = 0; a < k.kd; ++a)
              for (std::size_t b = 0; b < k.kh; ++b)
                for (std::size_t c = 0; c < k.kw; ++c)
                  y[out.index(co, z * k.kd + a, r * k.kh + b, q * k.kw + c)] +=
                      w.at(co, ci, (a * k.kh + b) * k.kw + c) * v;
          }
  }
  return y;
}

void check_range(const Layer& l, const std::vector<i64>& v, const Modulus& p) {
  const i64 half = static_cast<i64>((p.value() - 1) / 2);
  for (i64 x : v)
    if (x > half || x < -half)
      throw ParamError("quantization overflow at layer " + l.name + ": value " + std::to_string(x) +
                       " does not fit the plaintext modulus");
}

i64 max_abs(const std::vector<i64>& v) {
  i64 m = 0;
  for (i64 x : v) m = std::max(m, x < 0 ? -x : x);
  return m;
}

// Smallest f with floor(headroom * m / 2^f) <= a_max.
int choose_shift(i64 m, double headroom, i64 a_max) {
  const double target = headroom * static_cast<double>(m);
  int f = 0;
  while (std::floor(std::ldexp(target, -f)) > static_cast<double>(a_max)) ++f;
  return f;
}

// Requantizations that follow a product: transposed convs and squares.
bool calibrated_quantize(const Layer& prev) {
  return prev.kind == LayerKind::tconv || (prev.kind == LayerKind::activation && prev.act == ActKind::square);
}

struct PlainRun {
  std::vector<Tensor> intermediates;
  std::vector<i64> logits;
  Shape logits_shape;
  std::vector<u32> labels;
};

// `calibrating` picks shifts as it goes, writing them into the spec.
PlainRun run_plain(NetworkSpec& spec, const NetworkWeights& w, const Tensor& input, TruncMode mode, const Modulus& p,
                   bool calibrating, bool keep) {
  spec.validate();
  check_weights(spec, w);
  if (input.size() != spec.input.volume()) throw ParamError("input does not match the network input shape");
  const i64 a = spec.quant.a_max();
  const AnalysisReport bounds = analyze(spec, p, mode);
  PlainRun run;
  std::vector<i64> x = input.data;
  for (i64 v : x)
    if (std::abs(v) > a) throw ParamError("input value " + std::to_string(v) + " exceeds the activation width");
  std::map<int, std::vector<i64>> slots;
  const auto trunc = [&](const Layer& l, i64 v, int f, u64 bound) {
    if (mode == TruncMode::exact) return std::clamp(floor_shift(v, f), -a, a);
    if (static_cast<u64>(std::abs(v)) >= bound)
      throw ParamError("layer " + l.name + ": value " + std::to_string(v) + " exceeds the truncation bound");
    const i64 t = floor_shift(v, f);
    if (std::abs(t) + 1 > a)
      throw ParamError("layer " + l.name + ": value " + std::to_string(v) + " leaves the calibrated range");
    return t;
  };
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    Layer& l = spec.layers[i];
    switch (l.kind) {
      case LayerKind::conv:
        x = conv_direct(x, l.in, w.convs[static_cast<std::size_t>(l.weight_index)]);
        check_range(l, x, p);
        break;
      case LayerKind::tconv:
        x = tconv_direct(x, l.in, w.convs[static_cast<std::size_t>(l.weight_index)]);
        check_range(l, x, p);
        break;
      case LayerKind::activation:
        if (calibrating) l.shift = choose_shift(max_abs(x), spec.quant.headroom, a);
        for (i64& v : x) {
          if (l.act == ActKind::relu) {
            v = std::min(std::max<i64>(v, 0) >> l.shift, a);
          } else {
            const i64 t = l.shift == 0 && mode == TruncMode::prob ? v : trunc(l, v, l.shift, bounds.layers[i].trunc_in + 1);
            v = t * t;
          }
        }
        if (l.act == ActKind::square) check_range(l, x, p);
        break;
      case LayerKind::quantize:
        if (calibrating && i > 0 && calibrated_quantize(spec.layers[i - 1]))
          l.shift = choose_shift(max_abs(x), spec.quant.headroom, a);
        if (l.shift > 0)
          for (i64& v : x) v = trunc(l, v, l.shift, bounds.layers[i].trunc_in + 1);
        break;
      case LayerKind::pool: {
        const Shape& in = l.in;
        const Shape& o = l.out;
        std::vector<i64> y(o.volume());
        for (std::size_t c = 0; c < o.c; ++c)
          for (std::size_t z = 0; z < o.d; ++z)
            for (std::size_t r = 0; r < o.h; ++r)
              for (std::size_t q = 0; q < o.w; ++q) {
                i64 acc = l.pool == PoolKind::avg ? 0 : INT64_MIN;
                for (std::size_t dz = 0; dz < l.zd; ++dz)
                  for (std::size_t dy = 0; dy < l.zh; ++dy)
                    for (std::size_t dx = 0; dx < l.zw; ++dx) {
                      const i64 v = x[in.index(c, z * l.zd + dz, r * l.zh + dy, q * l.zw + dx)];
                      acc = l.pool == PoolKind::avg ? acc + v : std::max(acc, v);
                    }
                y[o.index(c, z, r, q)] = acc;
              }
        x = std::move(y);
        check_range(l, x, p);
        break;
      }
      case LayerKind::concat_source:
        slots[l.slot] = x;
        break;
      case LayerKind::concat_sink: {
        std::vector<i64> y = std::move(slots.at(l.slot));
        slots.erase(l.slot);
        y.insert(y.end(), x.begin(), x.end());
        x = std::move(y);
        break;
      }
      case LayerKind::argmax: {
        run.logits = x;
        run.logits_shape = l.in;
        const std::size_t px = l.in.spatial();
        std::vector<i64> y(px);
        run.labels.resize(px);
        for (std::size_t j = 0; j < px; ++j) {
          u32 best = 0;
          for (u32 c = 1; c < l.in.c; ++c)
            if (x[c * px + j] > x[best * px + j]) best = c;
          run.labels[j] = best;
          y[j] = best;
        }
        x = std::move(y);
        break;
      }
    }
    if (keep) run.intermediates.emplace_back(l.out.dims(), x);
  }
  return run;
}

}  // namespace

void calibrate(NetworkSpec& spec, const NetworkWeights& w, const Tensor& calibration_input, const Modulus& p) {
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    Layer& l = spec.layers[i];
    if (l.kind == LayerKind::activation) l.shift = 0;
    if (l.kind == LayerKind::quantize && !(i > 0 && calibrated_quantize(spec.layers[i - 1]))) l.shift = 0;
  }
  NetworkSpec work = spec;
  run_plain(work, w, calibration_input, TruncMode::exact, p, true, false);
  spec = std::move(work);
}

OracleResult oracle_infer(const NetworkSpec& spec, const NetworkWeights& w, const Tensor& input, TruncMode mode,
                          const Modulus& p) {
  NetworkSpec copy = spec;
  PlainRun run = run_plain(copy, w, input, mode, p, false, true);
  OracleResult r;
  r.labels = std::move(run.labels);
  r.logits = Tensor(run.logits_shape.dims(), std::move(run.logits));
  r.intermediates = std::move(run.intermediates);
  return r;
}

std::set<std::size_t> rotation_steps(const NetworkSpec& spec, std::size_t n) {
  std::set<std::size_t> steps;
  for (const Layer& l : spec.layers)
    if (l.kind == LayerKind::pool && l.pool == PoolKind::avg) {
      const auto s = plan_pool(l.in, l.zd, l.zh, l.zw, n).rotation_steps();
      steps.insert(s.begin(), s.end());
    }
  return steps;
}

}  // namespace bunet
