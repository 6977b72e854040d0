#include "bunet/runtime.hpp"

#include <cstring>
#include <future>
#include <iomanip>
#include <sstream>

#include "bunet/bytes.hpp"
#include "json.hpp"

namespace bunet {

Digest params_hash(const RingParams& params) {
  ByteWriter w;
  w.tag("BUNP");
  w.u64v(params.n());
  w.u64v(params.q().value());
  w.u64v(params.p().value());
  return sha256(w.data());
}

std::vector<u8> serialize(const Handshake& h) {
  ByteWriter w;
  w.tag("BUNH");
  w.u32v(h.version);
  w.bytes(h.spec_hash);
  w.bytes(h.params_hash);
  w.bytes(h.dealer_commitment);
  return w.take();
}

Handshake deserialize_handshake(std::span<const u8> bytes) {
  ByteReader r(bytes);
  r.expect_tag("BUNH");
  Handshake h;
  h.version = r.u32v();
  for (Digest* d : {&h.spec_hash, &h.params_hash, &h.dealer_commitment}) {
    auto b = r.bytes(32);
    std::memcpy(d->data(), b.data(), 32);
  }
  r.expect_end();
  return h;
}

KeyMaterial keygen_for(const NetworkSpec& spec, const RingParams& params, u64 seed) {
  return keygen(params, rotation_steps(spec, params.n()), seed);
}

std::vector<u8> serialize(const KeyMaterial& keys, const RingParams& params) {
  ByteWriter w;
  w.tag("BUNK");
  w.u32v(static_cast<u32>(params.n()));
  w.words(keys.sk.s.coeffs);
  w.words(keys.sk.s_eval);
  w.words(keys.pk.p0_eval);
  w.words(keys.pk.p1_eval);
  const auto rot = serialize(keys.rotations, params);
  w.u64v(rot.size());
  w.bytes(rot);
  return w.take();
}

KeyMaterial deserialize_keys(std::span<const u8> bytes, const RingParams& params) {
  ByteReader r(bytes);
  r.expect_tag("BUNK");
  const std::size_t n = r.u32v();
  if (n != params.n()) throw FormatError("key file is for ring degree " + std::to_string(n));
  KeyMaterial k;
  k.sk.s = ModPoly{r.words(n), PolyDomain::coefficient, ModulusId::q};
  k.sk.s_eval = r.words(n);
  k.pk.p0_eval = r.words(n);
  k.pk.p1_eval = r.words(n);
  const u64 len = r.u64v();
  k.rotations = deserialize_rotation_keys(r.bytes(len), params);
  r.expect_end();
  return k;
}

namespace {

void check_peer(const Handshake& mine, const Handshake& peer) {
  if (peer.version != mine.version)
    throw ProtocolAbort("peer speaks protocol version " + std::to_string(peer.version));
  if (peer.spec_hash != mine.spec_hash) throw ProtocolAbort("network spec hash mismatch");
  if (peer.params_hash != mine.params_hash) throw ProtocolAbort("ring parameter mismatch");
  if (peer.dealer_commitment != mine.dealer_commitment) throw ProtocolAbort("dealer commitment mismatch");
}

void setup(Session& s, const NetworkSpec& spec, std::optional<KeyMaterial>& keys) {
  ScopedTimer timer(s, Category::setup);
  Handshake mine;
  mine.spec_hash = spec.hash();
  mine.params_hash = params_hash(s.params());
  mine.dealer_commitment = s.tape().commitment();
  if (s.is_alice()) {
    s.channel().send(FrameType::control, serialize(mine));
    check_peer(mine, deserialize_handshake(s.channel().recv(FrameType::control)));
    KeyMaterial k = keys ? std::move(*keys) : keygen_for(spec, s.params(), s.options().seed);
    const auto need = rotation_steps(spec, s.params().n());
    for (std::size_t step : need)
      if (!k.rotations.steps.count(step))
        throw ResourceError("key set lacks rotation step " + std::to_string(step));
    s.channel().send(FrameType::control, serialize(k.rotations, s.params()));
    s.set_keys(std::move(k));
  } else {
    check_peer(mine, deserialize_handshake(s.channel().recv(FrameType::control)));
    s.channel().send(FrameType::control, serialize(mine));
    s.set_rotation_keys(deserialize_rotation_keys(s.channel().recv(FrameType::control), s.params()));
  }
}

ShareVector initial_share(Session& s, const NetworkSpec& spec, const Tensor* input) {
  ShareVector x;
  x.owner = s.role();
  x.dims = spec.input.dims();
  if (!s.is_alice()) {
    x.values.assign(spec.input.volume(), 0);
    return x;
  }
  const i64 a = spec.quant.a_max();
  x.values.reserve(input->size());
  for (i64 v : input->data) {
    if (v > a || v < -a) throw ParamError("input value " + std::to_string(v) + " exceeds the activation width");
    x.values.push_back(s.p().from_signed(v));
  }
  return x;
}

InferenceResult run_layers(Session& s, const NetworkSpec& spec, const Tensor* input, const NetworkWeights* weights,
                           std::optional<KeyMaterial>& keys) {
  spec.validate();
  if (s.is_alice()) {
    if (!input) throw ParamError("Alice needs an input tensor");
    if (input->dims != spec.input.dims()) throw ParamError("input does not match the network input shape");
  } else {
    if (!weights) throw ParamError("Bob needs the network weights");
    check_weights(spec, *weights);
  }
  setup(s, spec, keys);
  const AnalysisReport bounds = require_sound(spec, s.p(), s.options().trunc);
  s.checkpoint("setup");

  const u64 a = static_cast<u64>(spec.quant.a_max());
  const std::size_t n = s.params().n();
  ShareVector x = initial_share(s, spec, input);
  std::map<int, std::pair<ShareVector, Shape>> slots;
  InferenceResult out;
  const auto w_for = [&](const Layer& l) -> const ConvWeights* {
    return s.is_alice() ? nullptr : &weights->convs[static_cast<std::size_t>(l.weight_index)];
  };

  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const Layer& l = spec.layers[i];
    const LayerBounds& b = bounds.layers[i];
    s.ledger().current_batch = l.batch;
    switch (l.kind) {
      case LayerKind::conv:
        x = hom_conv(s, x, l.in, l.cout, l.kernel, w_for(l));
        break;
      case LayerKind::tconv:
        x = transposed_conv(s, x, l.in, l.cout, l.kernel.kd, l.kernel.kh, l.kernel.kw, w_for(l));
        break;
      case LayerKind::activation:
        if (l.act == ActKind::relu) {
          x = relu(s, x, l.shift, a, l.name);
        } else {
          x = square(s, truncate(s, x, l.shift, a, b.trunc_in + 1, l.name));
        }
        break;
      case LayerKind::quantize:
        if (l.shift > 0) x = truncate(s, x, l.shift, a, b.trunc_in + 1, l.name);
        break;
      case LayerKind::pool:
        x = l.pool == PoolKind::avg ? avg_pool(s, x, plan_pool(l.in, l.zd, l.zh, l.zw, n))
                                    : max_pool(s, x, l.in, l.zd, l.zh, l.zw);
        break;
      case LayerKind::concat_source:
        slots[l.slot] = {x, l.in};
        break;
      case LayerKind::concat_sink: {
        auto it = slots.find(l.slot);
        x = concat(it->second.first, it->second.second, x, l.in);
        slots.erase(it);
        break;
      }
      case LayerKind::argmax:
        out.logits = x;
        out.labels = readout_argmax(s, x, l.in);
        break;
    }
    x.dims = l.out.dims();
    s.checkpoint(l.name);
  }
  s.checkpoint("final");
  Sha256 h;
  // Alice-to-Bob stream first, so both parties print the same receipt
  const Digest sd = s.channel().sent_digest(), rd = s.channel().recv_digest();
  h.update(s.is_alice() ? sd : rd);
  h.update(s.is_alice() ? rd : sd);
  out.receipt = to_hex(h.peek());
  return out;
}

}  // namespace

InferenceResult run_secure_inference(Session& s, const NetworkSpec& spec, const Tensor* input,
                                     const NetworkWeights* weights, std::optional<KeyMaterial> keys) {
  try {
    return run_layers(s, spec, input, weights, keys);
  } catch (...) {
    s.channel().transport().close();
    throw;
  }
}

DualRunResult run_in_process(const NetworkSpec& spec, const NetworkWeights& weights, const Tensor& input,
                             const DualRunOptions& options, const RingParams& params) {
  auto [ta, tb] = mem_pair();
  if (options.configure) options.configure(*ta, *tb);
  Session sa(Role::alice, *ta, params, options.alice);
  Session sb(Role::bob, *tb, params, options.bob);
  auto bob = std::async(std::launch::async, [&] { return run_secure_inference(sb, spec, nullptr, &weights); });
  DualRunResult r;
  try {
    r.alice = run_secure_inference(sa, spec, &input, nullptr, options.keys);
  } catch (...) {
    try {
      bob.get();
    } catch (...) {
    }
    throw;
  }
  r.bob = bob.get();
  r.alice_ledger = sa.ledger();
  r.bob_ledger = sb.ledger();
  r.ledger = sa.ledger();
  r.ledger.merge(sb.ledger());
  return r;
}

// ---- reporting -------------------------------------------------------------

TimingReport timing_report(const TimingLedger& ledger, const NetworkSpec& spec,
                           const std::map<std::string, std::string>& meta) {
  using nlohmann::json;
  const double total = ledger.total_seconds();
  const auto share = [&](double s) { return total > 0 ? 100.0 * s / total : 0.0; };
  json j;
  j["spec"] = spec.name;
  j["spec_hash"] = to_hex(spec.hash());
  j["variant"] = variant_name(spec.variant);
  for (const auto& [k, v] : meta) j["meta"][k] = v;
  j["total_seconds"] = total;
  j["total_bytes"] = ledger.total_bytes();
  j["idle_seconds"] = ledger.idle_seconds;
  json prims = json::array();
  for (std::size_t c = 0; c < kCategoryCount; ++c) {
    const CategoryStats& st = ledger.total[c];
    prims.push_back({{"primitive", category_name(static_cast<Category>(c))},
                     {"seconds", st.seconds},
                     {"percent", share(st.seconds)},
                     {"bytes", st.bytes_sent},
                     {"frames", st.frames_sent},
                     {"instances", st.instances},
                     {"seconds_per_instance", st.instances ? st.seconds / static_cast<double>(st.instances) : 0.0},
                     {"gc_and_gates", st.gc_and_gates},
                     {"gc_table_rows", st.gc_table_rows}});
  }
  j["primitives"] = std::move(prims);
  json batches = json::array();
  for (const auto& [batch, cats] : ledger.per_batch) {
    json b;
    b["batch"] = batch;
    double secs = 0;
    u64 rows = 0;
    for (std::size_t c = 0; c < kCategoryCount; ++c) {
      if (cats[c].seconds > 0 || cats[c].bytes_sent > 0)
        b["seconds"][category_name(static_cast<Category>(c))] = cats[c].seconds;
      secs += cats[c].seconds;
      rows += cats[c].gc_table_rows;
    }
    b["total_seconds"] = secs;
    b["gc_table_rows"] = rows;
    batches.push_back(std::move(b));
  }
  j["batches"] = std::move(batches);

  std::ostringstream t;
  t << "spec " << spec.name << " (" << variant_name(spec.variant) << ")\n";
  for (const auto& [k, v] : meta) t << k << ": " << v << "\n";
  t << std::left << std::setw(12) << "primitive" << std::right << std::setw(12) << "seconds" << std::setw(9) << "share"
    << std::setw(14) << "bytes" << std::setw(12) << "instances" << std::setw(14) << "us/instance" << std::setw(14)
    << "gc rows" << "\n";
  t << std::fixed;
  for (std::size_t c = 0; c < kCategoryCount; ++c) {
    const CategoryStats& st = ledger.total[c];
    t << std::left << std::setw(12) << category_name(static_cast<Category>(c)) << std::right << std::setw(12)
      << std::setprecision(4) << st.seconds << std::setw(8) << std::setprecision(1) << share(st.seconds) << "%"
      << std::setw(14) << st.bytes_sent << std::setw(12) << st.instances << std::setw(14) << std::setprecision(3)
      << (st.instances ? 1e6 * st.seconds / static_cast<double>(st.instances) : 0.0) << std::setw(14)
      << st.gc_table_rows << "\n";
  }
  t << std::left << std::setw(12) << "total" << std::right << std::setw(12) << std::setprecision(4) << total
    << std::setw(8) << std::setprecision(1) << 100.0 << "%" << std::setw(14) << ledger.total_bytes() << "\n";
  t << "idle (excluded) " << std::setprecision(4) << ledger.idle_seconds << " s\n";
  t << "\n" << std::left << std::setw(8) << "batch" << std::right << std::setw(12) << "seconds" << std::setw(14)
    << "gc rows" << "\n";
  for (const auto& b : j["batches"])
    t << std::left << std::setw(8) << b["batch"].get<int>() << std::right << std::setw(12) << std::setprecision(4)
      << b["total_seconds"].get<double>() << std::setw(14) << b["gc_table_rows"].get<u64>() << "\n";
  return {j.dump(2), t.str()};
}

}  // namespace bunet
