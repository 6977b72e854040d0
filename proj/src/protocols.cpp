#include "bunet/protocols.hpp"

#include <algorithm>
#include <optional>

#include "bunet/bytes.hpp"

namespace bunet {

std::string to_string(const Shape& s) {
  return std::to_string(s.c) + "x" + std::to_string(s.d) + "x" + std::to_string(s.h) + "x" + std::to_string(s.w);
}

Kernel Kernel::same(std::size_t kd, std::size_t kh, std::size_t kw) {
  for (std::size_t k : {kd, kh, kw})
    if (k % 2 == 0) throw ParamError("same-padded kernels need odd extents");
  return Kernel{kd, kh, kw, -static_cast<int>(kd / 2), -static_cast<int>(kh / 2), -static_cast<int>(kw / 2)};
}

namespace {

void require_size(const ShareVector& x, std::size_t n, const char* what) {
  if (x.size() != n)
    throw ParamError(std::string(what) + ": share has " + std::to_string(x.size()) + " elements, expected " +
                     std::to_string(n));
}

ShareVector make_share(Role r, std::vector<u64> v, const Shape& shape) {
  ShareVector s;
  s.owner = r;
  s.values = std::move(v);
  s.dims = shape.dims();
  return s;
}

struct Halo {
  std::size_t lo_d, lo_h, lo_w, hi_d, hi_h, hi_w;
};

Halo halo_of(const Kernel& k) {
  const auto lo = [](int o) { return static_cast<std::size_t>(-o); };
  const auto hi = [](std::size_t k, int o) { return static_cast<std::size_t>(static_cast<int>(k) - 1 + o); };
  for (auto [k, o] : {std::pair{k.kd, k.od}, {k.kh, k.oh}, {k.kw, k.ow}}) {
    if (k == 0 || o > 0 || static_cast<int>(k) - 1 + o < 0)
      throw ParamError("kernel must cover offset 0 on every axis");
  }
  return {lo(k.od), lo(k.oh), lo(k.ow), hi(k.kd, k.od), hi(k.kh, k.oh), hi(k.kw, k.ow)};
}

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

// poly * X^e in Z_m[X]/(X^n + 1)
void add_shifted(std::vector<u64>& acc, std::span<const u64> poly, long e, const Modulus& m) {
  const long n = static_cast<long>(acc.size());
  e = ((e % (2 * n)) + 2 * n) % (2 * n);
  for (long i = 0; i < n; ++i) {
    if (poly[i] == 0) continue;
    long j = i + e;
    bool neg = false;
    while (j >= n) {
      j -= n;
      neg = !neg;
    }
    acc[j] = neg ? m.sub(acc[j], poly[i]) : m.add(acc[j], poly[i]);
  }
}

// ---- ciphertext vectors on the wire ---------------------------------------

void send_ciphertexts(Session& s, std::span<const Ciphertext> cts) {
  ByteWriter w;
  w.u32v(static_cast<u32>(cts.size()));
  for (const Ciphertext& c : cts) {
    auto b = serialize(c, s.params());
    w.u32v(static_cast<u32>(b.size()));
    w.bytes(b);
  }
  s.channel().send(FrameType::ciphertext, w.data());
}

std::vector<Ciphertext> recv_ciphertexts(Session& s, std::size_t expected) {
  const auto payload = s.channel().recv(FrameType::ciphertext);
  ByteReader r(payload);
  if (r.u32v() != expected) throw ProtocolAbort("unexpected ciphertext count");
  std::vector<Ciphertext> out;
  out.reserve(expected);
  for (std::size_t i = 0; i < expected; ++i) {
    const u32 len = r.u32v();
    out.push_back(deserialize_ciphertext(r.bytes(len), s.params()));
  }
  r.expect_end();
  return out;
}

void check_budget(const Session& s, const Ciphertext& c) {
  if (s.evaluator().noise_budget(c) <= 0) throw ResourceError("noise budget exhausted");
}

std::vector<u8> pack_bits(std::span<const u8> bits) {
  std::vector<u8> out((bits.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < bits.size(); ++i) out[i / 8] |= static_cast<u8>((bits[i] & 1) << (i % 8));
  return out;
}

std::vector<u8> unpack_bits(std::span<const u8> bytes, std::size_t count) {
  if (bytes.size() != (count + 7) / 8) throw ProtocolAbort("bit vector of unexpected length");
  std::vector<u8> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = (bytes[i / 8] >> (i % 8)) & 1;
  return out;
}

void put_blocks(ByteWriter& w, std::span<const Block> b) {
  for (const Block& x : b) {
    w.u64v(x.lo());
    w.u64v(x.hi());
  }
}

std::vector<Block> get_blocks(ByteReader& r, std::size_t n) {
  if (r.remaining() / 16 < n) throw ProtocolAbort("truncated label block");
  std::vector<Block> out(n);
  for (auto& x : out) {
    const u64 lo = r.u64v();
    const u64 hi = r.u64v();
    x = Block(hi, lo);
  }
  return out;
}

void record(Session& s, const std::string& layer, const char* op, int shift, bool clamped, const ShareVector& in,
            const ShareVector& out) {
  if (!s.trace()) return;
  TraceRecord r;
  r.layer = layer;
  r.op = op;
  r.role = s.role();
  r.shift = shift;
  r.mode = s.options().trunc;
  r.clamped = clamped;
  r.input = in.values;
  r.output = out.values;
  s.trace()->add(std::move(r));
}

}  // namespace

// ---- HomConv ----------------------------------------------------------------

ConvPlan plan_conv(const Shape& in, std::size_t cout, const Kernel& k, std::size_t n) {
  const Halo h = halo_of(k);
  if (in.volume() == 0 || cout == 0) throw ParamError("empty convolution");
  ConvPlan p;
  p.in = in;
  p.cout = cout;
  p.kernel = k;
  p.td = in.d;
  p.th = in.h;
  p.tw = in.w;
  const auto padded = [&] { return (p.td + h.lo_d + h.hi_d) * (p.th + h.lo_h + h.hi_h) * (p.tw + h.lo_w + h.hi_w); };
  while (padded() > n) {
    std::size_t* axis = &p.tw;
    if (p.th > *axis) axis = &p.th;
    if (p.td > *axis) axis = &p.td;
    if (*axis == 1) throw ParamError("filter halo alone exceeds the ring degree");
    *axis = ceil_div(*axis, 2);
  }
  p.pd = p.td + h.lo_d + h.hi_d;
  p.ph = p.th + h.lo_h + h.hi_h;
  p.pw = p.tw + h.lo_w + h.hi_w;
  p.nd = ceil_div(in.d, p.td);
  p.nh = ceil_div(in.h, p.th);
  p.nw = ceil_div(in.w, p.tw);
  p.tiles_per_poly = n / p.padded_volume();
  if (p.tiles() <= p.tiles_per_poly) p.channels_per_poly = std::min(in.c, n / p.channel_block());
  validate(p, n);
  return p;
}

void validate(const ConvPlan& p, std::size_t n) {
  const Halo h = halo_of(p.kernel);
  if (p.pd != p.td + h.lo_d + h.hi_d || p.ph != p.th + h.lo_h + h.hi_h || p.pw != p.tw + h.lo_w + h.hi_w)
    throw ParamError("tile halo does not match the kernel");
  if (p.tiles_per_poly == 0 || p.tiles_per_poly * p.padded_volume() > n)
    throw ParamError("padded tiles exceed the ring degree");
  if (p.nd * p.td < p.in.d || p.nh * p.th < p.in.h || p.nw * p.tw < p.in.w)
    throw ParamError("tiles do not cover the input");
  if (p.channels_per_poly > 1 && (p.polys() != 1 || p.channels_per_poly * p.channel_block() > n))
    throw ParamError("packed channels exceed the ring degree");
}

std::vector<std::vector<u64>> pack_channel(const ConvPlan& p, std::span<const u64> ch, std::size_t n) {
  if (ch.size() != p.in.spatial()) throw ParamError("channel size does not match the plan");
  const Halo h = halo_of(p.kernel);
  std::vector<std::vector<u64>> polys(p.polys(), std::vector<u64>(n, 0));
  for (std::size_t t = 0; t < p.tiles(); ++t) {
    const std::size_t iz = t / (p.nh * p.nw), iy = (t / p.nw) % p.nh, ix = t % p.nw;
    auto& poly = polys[t / p.tiles_per_poly];
    const std::size_t base = (t % p.tiles_per_poly) * p.padded_volume();
    for (std::size_t lz = 0; lz < p.pd; ++lz) {
      const long gz = static_cast<long>(iz * p.td + lz) - static_cast<long>(h.lo_d);
      if (gz < 0 || gz >= static_cast<long>(p.in.d)) continue;
      for (std::size_t ly = 0; ly < p.ph; ++ly) {
        const long gy = static_cast<long>(iy * p.th + ly) - static_cast<long>(h.lo_h);
        if (gy < 0 || gy >= static_cast<long>(p.in.h)) continue;
        for (std::size_t lx = 0; lx < p.pw; ++lx) {
          const long gx = static_cast<long>(ix * p.tw + lx) - static_cast<long>(h.lo_w);
          if (gx < 0 || gx >= static_cast<long>(p.in.w)) continue;
          poly[base + (lz * p.ph + ly) * p.pw + lx] = ch[(static_cast<std::size_t>(gz) * p.in.h + gy) * p.in.w + gx];
        }
      }
    }
  }
  return polys;
}

void unpack_channel(const ConvPlan& p, std::span<const std::vector<u64>> polys, std::span<u64> ch) {
  if (ch.size() != p.in.spatial() || polys.size() != p.polys()) throw ParamError("unpack size mismatch");
  const Halo h = halo_of(p.kernel);
  for (std::size_t t = 0; t < p.tiles(); ++t) {
    const std::size_t iz = t / (p.nh * p.nw), iy = (t / p.nw) % p.nh, ix = t % p.nw;
    const auto& poly = polys[t / p.tiles_per_poly];
    const std::size_t base = (t % p.tiles_per_poly) * p.padded_volume();
    for (std::size_t a = 0; a < p.td && iz * p.td + a < p.in.d; ++a)
      for (std::size_t b = 0; b < p.th && iy * p.th + b < p.in.h; ++b)
        for (std::size_t c = 0; c < p.tw && ix * p.tw + c < p.in.w; ++c) {
          const std::size_t idx = base + ((a + h.lo_d) * p.ph + (b + h.lo_h)) * p.pw + (c + h.lo_w);
          ch[((iz * p.td + a) * p.in.h + iy * p.th + b) * p.in.w + ix * p.tw + c] = poly[idx];
        }
  }
}

std::vector<u64> filter_poly(const ConvPlan& p, std::span<const i64> taps, const Modulus& m, std::size_t n) {
  const Kernel& k = p.kernel;
  if (taps.size() != k.taps()) throw ParamError("tap count does not match the kernel");
  std::vector<u64> poly(n, 0);
  const long two_n = static_cast<long>(2 * n);
  for (std::size_t a = 0; a < k.kd; ++a)
    for (std::size_t b = 0; b < k.kh; ++b)
      for (std::size_t c = 0; c < k.kw; ++c) {
        const i64 w = taps[(a * k.kh + b) * k.kw + c];
        if (w == 0) continue;
        const long dz = static_cast<long>(a) + k.od, dy = static_cast<long>(b) + k.oh, dx = static_cast<long>(c) + k.ow;
        const long off = (dz * static_cast<long>(p.ph) + dy) * static_cast<long>(p.pw) + dx;
        // w * X^{-off}; X^n = -1
        const long e = ((-off) % two_n + two_n) % two_n;
        const u64 v = m.from_signed(w);
        if (e < static_cast<long>(n))
          poly[e] = m.add(poly[e], v);
        else
          poly[e - n] = m.sub(poly[e - n], v);
      }
  return poly;
}

ShareVector hom_conv(Session& s, const ShareVector& x, const Shape& in, std::size_t cout, const Kernel& k,
                     const ConvWeights* weights) {
  ScopedTimer timer(s, Category::homconv, cout * in.spatial());
  require_size(x, in.volume(), "hom_conv");
  const RingParams& rp = s.params();
  const std::size_t n = rp.n();
  const Modulus& p = rp.p();
  const ConvPlan plan = plan_conv(in, cout, k, n);
  const std::size_t np = plan.polys();
  const bool explicit_dft = s.options().explicit_dft;
  const BatchEncoder& be = s.evaluator().encoder();
  const NttTables& tp = rp.tables(ModulusId::p);

  const auto to_plain = [&](std::vector<u64> poly) -> PlainVector {
    if (!explicit_dft) return {std::move(poly), Encoding::coefficients};
    tp.forward(poly, NttStyle::negacyclic);
    return {be.spectrum_to_slots(poly), Encoding::slots};
  };
  const auto from_plain = [&](const PlainVector& v) -> std::vector<u64> {
    if (!explicit_dft) return v.values;
    auto spec = be.slots_to_spectrum(v.values);
    tp.inverse(spec, NttStyle::negacyclic);
    return spec;
  };

  const Shape out_shape = plan.out();
  std::vector<u64> y(out_shape.volume(), 0);
  const std::size_t sp = in.spatial();
  const std::size_t m = plan.channels_per_poly, groups = plan.channel_groups();
  const long block = static_cast<long>(plan.channel_block());
  // group g, polynomial q: channels g*m.. at consecutive channel blocks
  const auto pack_inputs = [&] {
    std::vector<std::vector<u64>> polys(groups * np, std::vector<u64>(n, 0));
    for (std::size_t ci = 0; ci < in.c; ++ci) {
      auto ch = pack_channel(plan, std::span(x.values).subspan(ci * sp, sp), n);
      for (std::size_t q = 0; q < np; ++q) {
        if (m == 1) {
          polys[ci * np + q] = std::move(ch[q]);
        } else {
          add_shifted(polys[(ci / m) * np + q], ch[q], static_cast<long>(ci % m) * block, p);
        }
      }
    }
    return polys;
  };

  if (s.is_alice()) {
    std::vector<Ciphertext> cts;
    cts.reserve(groups * np);
    for (auto& poly : pack_inputs()) cts.push_back(s.encryptor().encrypt(to_plain(std::move(poly)), s.rng()));
    send_ciphertexts(s, cts);
    const auto outs = recv_ciphertexts(s, cout * np);
    const Decryptor& dec = s.decryptor();
    for (std::size_t co = 0; co < cout; ++co) {
      std::vector<std::vector<u64>> polys;
      for (std::size_t q = 0; q < np; ++q) {
        check_budget(s, outs[co * np + q]);
        polys.push_back(from_plain(dec.decrypt(outs[co * np + q])));
      }
      unpack_channel(plan, polys, std::span(y).subspan(co * sp, sp));
    }
    return make_share(s.role(), std::move(y), out_shape);
  }

  if (!weights) throw ParamError("Bob must supply the convolution weights");
  if (weights->cout != cout || weights->cin != in.c || !(weights->kernel == k) ||
      weights->w.size() != cout * in.c * k.taps())
    throw ParamError("weights do not match the convolution shape");
  const Evaluator& ev = s.evaluator();
  auto cts = recv_ciphertexts(s, groups * np);
  auto mine = pack_inputs();
  for (std::size_t i = 0; i < cts.size(); ++i) {
    Ciphertext& c = cts[i];
    if (c.layout != (explicit_dft ? Encoding::slots : Encoding::coefficients))
      throw ProtocolAbort("ciphertext layout does not match the convolution path");
    c = ev.add_plain(c, to_plain(std::move(mine[i])));
    ev.to_eval(c);
  }
  std::vector<Ciphertext> outs;
  outs.reserve(cout * np);
  std::vector<MulOperand> ops(groups);
  for (std::size_t co = 0; co < cout; ++co) {
    for (std::size_t g = 0; g < groups; ++g) {
      std::vector<u64> f(n, 0);
      for (std::size_t ci = g * m; ci < std::min(in.c, (g + 1) * m); ++ci) {
        std::span<const i64> taps(weights->w.data() + (co * in.c + ci) * k.taps(), k.taps());
        const auto fp = filter_poly(plan, taps, p, n);
        if (m == 1) {
          f = fp;
        } else {
          add_shifted(f, fp, -static_cast<long>(ci % m) * block, p);
        }
      }
      ops[g] = ev.prepare(to_plain(std::move(f)));
    }
    std::vector<std::vector<u64>> masks;
    for (std::size_t q = 0; q < np; ++q) {
      Ciphertext acc;
      for (std::size_t g = 0; g < groups; ++g) ev.mul_plain_accumulate(acc, cts[g * np + q], ops[g]);
      ev.to_coeff(acc);
      check_budget(s, acc);
      auto r = random_vector(s.rng(), n, p);
      outs.push_back(ev.sub_plain(acc, to_plain(r)));
      masks.push_back(std::move(r));
    }
    auto ych = std::span(y).subspan(co * sp, sp);
    unpack_channel(plan, masks, ych);
    if (!weights->bias.empty()) {
      const u64 b = p.from_signed(weights->bias.at(co));
      for (u64& v : ych) v = p.add(v, b);
    }
  }
  send_ciphertexts(s, outs);
  return make_share(s.role(), std::move(y), out_shape);
}

// ---- transposed convolution ------------------------------------------------

Shape interleaved_shape(const Shape& in, std::size_t sd, std::size_t sh, std::size_t sw) {
  return Shape{in.c, in.d * sd, in.h * sh, in.w * sw};
}

std::vector<u64> interleave_zeros(std::span<const u64> x, const Shape& in, std::size_t sd, std::size_t sh,
                                  std::size_t sw) {
  if (x.size() != in.volume()) throw ParamError("interleave: size mismatch");
  const Shape out = interleaved_shape(in, sd, sh, sw);
  std::vector<u64> y(out.volume(), 0);
  for (std::size_t c = 0; c < in.c; ++c)
    for (std::size_t z = 0; z < in.d; ++z)
      for (std::size_t r = 0; r < in.h; ++r)
        for (std::size_t q = 0; q < in.w; ++q) y[out.index(c, z * sd, r * sh, q * sw)] = x[in.index(c, z, r, q)];
  return y;
}

Kernel transposed_kernel(std::size_t kd, std::size_t kh, std::size_t kw) {
  return Kernel{kd, kh, kw, 1 - static_cast<int>(kd), 1 - static_cast<int>(kh), 1 - static_cast<int>(kw)};
}

ConvWeights flip_for_transposed(const ConvWeights& w) {
  ConvWeights f = w;
  const Kernel& k = w.kernel;
  f.kernel = transposed_kernel(k.kd, k.kh, k.kw);
  for (std::size_t co = 0; co < w.cout; ++co)
    for (std::size_t ci = 0; ci < w.cin; ++ci)
      for (std::size_t a = 0; a < k.kd; ++a)
        for (std::size_t b = 0; b < k.kh; ++b)
          for (std::size_t c = 0; c < k.kw; ++c) {
            const std::size_t dst = (a * k.kh + b) * k.kw + c;
            const std::size_t src = ((k.kd - 1 - a) * k.kh + (k.kh - 1 - b)) * k.kw + (k.kw - 1 - c);
            f.w[(co * w.cin + ci) * k.taps() + dst] = w.at(co, ci, src);
          }
  return f;
}

ShareVector transposed_conv(Session& s, const ShareVector& x, const Shape& in, std::size_t cout, std::size_t kd,
                            std::size_t kh, std::size_t kw, const ConvWeights* weights) {
  require_size(x, in.volume(), "transposed_conv");
  const Shape up = interleaved_shape(in, kd, kh, kw);
  ShareVector z = make_share(s.role(), interleave_zeros(x.values, in, kd, kh, kw), up);
  std::optional<ConvWeights> flipped;
  if (weights) {
    if (!(weights->kernel == Kernel{kd, kh, kw, 0, 0, 0}))
      throw ParamError("transposed-conv weights must have stride-sized kernels with origin 0");
    flipped = flip_for_transposed(*weights);
  }
  return hom_conv(s, z, up, cout, transposed_kernel(kd, kh, kw), flipped ? &*flipped : nullptr);
}

// ---- activations ------------------------------------------------------------

const char* act_kind_name(ActKind k) { return k == ActKind::relu ? "relu" : "square"; }

std::vector<u8> run_gc(Session& s, const BoolCircuit& c, std::size_t instances, std::span<const u8> bits,
                       ScopedTimer& timer) {
  const std::size_t gin = c.garbler_inputs.size(), ein = c.evaluator_inputs.size(), nout = c.outputs.size();
  const std::size_t own = s.is_alice() ? gin : ein;
  if (bits.size() != instances * own) throw ParamError("run_gc: input bit count mismatch");
  constexpr std::size_t kMaxAndsPerFrame = 1u << 20;
  const std::size_t per = std::max<std::size_t>(1, c.and_count);
  const std::size_t chunk = std::max<std::size_t>(1, std::min(s.options().gc_batch, kMaxAndsPerFrame / per));
  std::vector<u8> out;
  if (s.is_alice()) out.reserve(instances * nout);

  for (std::size_t start = 0; start < instances; start += chunk) {
    const std::size_t m = std::min(chunk, instances - start);
    const auto mine = bits.subspan(start * own, m * own);
    if (s.is_alice()) {
      GarblerSecrets sec;
      const u64 tweak = s.reserve_tweaks(m * c.and_count);
      const GarbledCircuit gc = garble(c, m, s.next_garble_seed(), tweak, sec);
      timer.add_gc(m * c.and_count, gc.table_rows());
      OtSenderPad pad = s.tape().ot_sender(m * ein);
      const auto e = unpack_bits(s.channel().recv(FrameType::ot_block), m * ein);
      const auto y = ot_respond(evaluator_label_pairs(sec), e, pad);
      const auto labels = garbler_labels(c, sec, mine);
      ByteWriter w;
      const auto g = serialize(gc);
      w.u32v(static_cast<u32>(g.size()));
      w.bytes(g);
      put_blocks(w, labels);
      put_blocks(w, y);
      s.channel().send(FrameType::gc_blob, w.data());
      const auto perm = unpack_bits(s.channel().recv(FrameType::share), m * nout);
      const auto dec = decode_outputs(perm, sec);
      out.insert(out.end(), dec.begin(), dec.end());
    } else {
      OtReceiverPad pad = s.tape().ot_receiver(m * ein);
      s.channel().send(FrameType::ot_block, pack_bits(ot_choose(mine, pad)));
      const auto payload = s.channel().recv(FrameType::gc_blob);
      ByteReader r(payload);
      const u32 glen = r.u32v();
      const GarbledCircuit gc = deserialize_garbled(r.bytes(glen));
      if (gc.instances != m) throw ProtocolAbort("garbled batch has the wrong instance count");
      const auto labels = get_blocks(r, m * (1 + gin));
      const auto y = get_blocks(r, 2 * m * ein);
      r.expect_end();
      const auto active = ot_receive(mine, y, pad);
      const auto outl = evaluate(c, gc, labels, active);
      s.channel().send(FrameType::share, pack_bits(permute_bits(outl)));
    }
  }
  return out;
}

namespace {

// Shared driver for the reshare circuits: Alice feeds `words_a` k-bit words
// per instance, Bob his words plus a fresh mask that becomes his share.
ShareVector gc_reshare(Session& s, const BoolCircuit& c, const ShareVector& x, std::size_t window,
                       std::span<const std::size_t> gather, ScopedTimer& timer, const Shape& out_shape) {
  const Modulus& p = s.p();
  const int k = bit_width_for(p.value());
  const std::size_t instances = gather.size() / window;
  std::vector<u8> bits;
  std::vector<u64> r;
  if (s.is_alice()) {
    bits.reserve(instances * window * k);
    for (std::size_t idx : gather) push_bits(bits, x.values[idx], k);
  } else {
    r = random_vector(s.rng(), instances, p);
    bits.reserve(instances * (window + 1) * k);
    for (std::size_t i = 0; i < instances; ++i) {
      for (std::size_t j = 0; j < window; ++j) push_bits(bits, x.values[gather[i * window + j]], k);
      push_bits(bits, r[i], k);
    }
  }
  const auto out = run_gc(s, c, instances, bits, timer);
  if (!s.is_alice()) return make_share(s.role(), std::move(r), out_shape);
  std::vector<u64> y(instances);
  for (std::size_t i = 0; i < instances; ++i) {
    y[i] = read_bits(std::span(out).subspan(i * k, k), k);
    if (y[i] >= p.value()) throw ProtocolAbort("garbled output is not a residue");
  }
  return make_share(s.role(), std::move(y), out_shape);
}

Shape shape_of(const ShareVector& x) {
  if (x.dims.size() == 4) return Shape{x.dims[0], x.dims[1], x.dims[2], x.dims[3]};
  return Shape{1, 1, 1, x.size()};
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace

ShareVector relu(Session& s, const ShareVector& x, int shift, u64 clamp, const std::string& label) {
  ScopedTimer timer(s, Category::relu_gc, x.size());
  const Modulus& p = s.p();
  const int k = bit_width_for(p.value());
  const BoolCircuit& c =
      s.circuit("relu." + std::to_string(shift) + "." + std::to_string(clamp),
                [&] { return circuits::relu_reshare(k, p.value(), shift, clamp); });
  const auto gather = iota(x.size());
  ShareVector y = gc_reshare(s, c, x, 1, gather, timer, shape_of(x));
  y.dims = x.dims;
  record(s, label, "relu", shift, clamp > 0, x, y);
  return y;
}

ShareVector square(Session& s, const ShareVector& x) {
  ScopedTimer timer(s, Category::square_mt, x.size());
  const Modulus& p = s.p();
  TripleShare t = s.tape().triples(x.size(), p);
  const BeaverOpening mine = beaver_open(x, x, t, p);
  std::vector<u64> both(2 * x.size());
  std::copy(mine.d.begin(), mine.d.end(), both.begin());
  std::copy(mine.e.begin(), mine.e.end(), both.begin() + static_cast<long>(x.size()));
  std::vector<u64> peer;
  if (s.is_alice()) {
    s.send_residues(FrameType::share, both);
    peer = s.recv_residues(FrameType::share, both.size());
  } else {
    peer = s.recv_residues(FrameType::share, both.size());
    s.send_residues(FrameType::share, both);
  }
  std::vector<u64> d(x.size()), e(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    d[i] = p.add(both[i], peer[i]);
    e[i] = p.add(both[x.size() + i], peer[x.size() + i]);
  }
  ShareVector g = beaver_close(s.role(), d, e, t, p);
  g.dims = x.dims;
  return g;
}

ShareVector truncate(Session& s, const ShareVector& x, int shift, u64 clamp, u64 bound, const std::string& label) {
  if (shift < 0) throw ParamError("negative truncation shift");
  const Modulus& p = s.p();
  ShareVector y;
  if (s.options().trunc == TruncMode::exact) {
    if (shift == 0 && clamp == 0) return x;
    ScopedTimer timer(s, Category::truncation, x.size());
    const int k = bit_width_for(p.value());
    const BoolCircuit& c =
        s.circuit("trunc." + std::to_string(shift) + "." + std::to_string(clamp),
                  [&] { return circuits::trunc_reshare(k, p.value(), shift, clamp); });
    const auto gather = iota(x.size());
    y = gc_reshare(s, c, x, 1, gather, timer, shape_of(x));
    y.dims = x.dims;
  } else {
    if (shift == 0) return x;
    ScopedTimer timer(s, Category::truncation, x.size());
    const u64 bias = trunc_bias(bound, shift);
    if (s.is_alice()) {
      const auto rho = s.recv_residues(FrameType::share, x.size());
      y = prob_trunc_alice(x, rho, shift, bias, p);
    } else {
      BobTruncation bt = prob_trunc_bob(x, shift, bias, p, s.rng());
      s.send_residues(FrameType::share, bt.rho);
      y = std::move(bt.out);
    }
  }
  record(s, label, "trunc", shift, s.options().trunc == TruncMode::exact && clamp > 0, x, y);
  return y;
}

ShareVector activation(Session& s, const ShareVector& x, ActKind kind, const ActQuant& q, const std::string& label) {
  if (kind == ActKind::relu) return relu(s, x, q.shift, q.clamp, label);
  ShareVector t = truncate(s, x, q.shift, q.clamp, q.bound, label + ".pre");
  ShareVector sq = square(s, t);
  return truncate(s, sq, q.square_shift, q.clamp, q.square_bound, label + ".post");
}

// ---- pooling ---------------------------------------------------------------

std::vector<std::size_t> PoolPlan::rotation_steps() const {
  std::vector<std::size_t> steps;
  for (std::size_t i = 1; i < zw; ++i) steps.push_back(i);
  for (std::size_t i = 1; i < zh; ++i) steps.push_back(i * pw);
  for (std::size_t i = 1; i < zd; ++i) steps.push_back(i * pw * ph);
  return steps;
}

PoolPlan plan_pool(const Shape& in, std::size_t zd, std::size_t zh, std::size_t zw, std::size_t n) {
  if (zd == 0 || zh == 0 || zw == 0) throw ParamError("empty pooling window");
  if (in.d % zd || in.h % zh || in.w % zw) throw ParamError("pooling window does not divide " + to_string(in));
  PoolPlan p;
  p.in = in;
  p.zd = zd;
  p.zh = zh;
  p.zw = zw;
  p.row_size = n / 2;
  p.pd = in.d;
  p.ph = in.h;
  p.pw = in.w;
  const auto round_up = [](std::size_t v, std::size_t z) { return ceil_div(v, z) * z; };
  while (p.block_size() > p.row_size) {
    // shrink the longest axis that can still lose a whole window
    std::size_t* best = nullptr;
    std::size_t best_z = 1;
    for (auto [axis, z] : {std::pair{&p.pw, zw}, {&p.ph, zh}, {&p.pd, zd}}) {
      if (*axis > z && (!best || *axis > *best)) {
        best = axis;
        best_z = z;
      }
    }
    if (!best) throw ParamError("pooling window does not fit in a slot row");
    *best = round_up(ceil_div(*best, 2), best_z);
  }
  p.nd = ceil_div(in.d, p.pd);
  p.nh = ceil_div(in.h, p.ph);
  p.nw = ceil_div(in.w, p.pw);
  p.blocks_per_row = p.row_size / p.block_size();
  return p;
}

namespace {

// Slot position of input element (c, z, y, x) in the pool layout.
std::pair<std::size_t, std::size_t> pool_slot(const PoolPlan& p, std::size_t c, std::size_t z, std::size_t y,
                                              std::size_t x) {
  const std::size_t b = ((c * p.nd + z / p.pd) * p.nh + y / p.ph) * p.nw + x / p.pw;
  const std::size_t ct = b / (2 * p.blocks_per_row);
  const std::size_t row = (b / p.blocks_per_row) % 2;
  const std::size_t local = ((z % p.pd) * p.ph + y % p.ph) * p.pw + x % p.pw;
  return {ct, row * p.row_size + (b % p.blocks_per_row) * p.block_size() + local};
}

}  // namespace

std::vector<std::vector<u64>> pack_pool(const PoolPlan& p, std::span<const u64> x, std::size_t n) {
  if (x.size() != p.in.volume()) throw ParamError("pool input size mismatch");
  if (n / 2 != p.row_size) throw ParamError("pool plan was made for another ring degree");
  std::vector<std::vector<u64>> slots(p.ciphertexts(), std::vector<u64>(n, 0));
  const Shape& in = p.in;
  for (std::size_t c = 0; c < in.c; ++c)
    for (std::size_t z = 0; z < in.d; ++z)
      for (std::size_t y = 0; y < in.h; ++y)
        for (std::size_t q = 0; q < in.w; ++q) {
          auto [ct, slot] = pool_slot(p, c, z, y, q);
          slots[ct][slot] = x[in.index(c, z, y, q)];
        }
  return slots;
}

std::vector<u64> unpack_pool(const PoolPlan& p, std::span<const std::vector<u64>> slots) {
  if (slots.size() != p.ciphertexts()) throw ParamError("pool slot vector count mismatch");
  const Shape o = p.out();
  std::vector<u64> y(o.volume());
  for (std::size_t c = 0; c < o.c; ++c)
    for (std::size_t z = 0; z < o.d; ++z)
      for (std::size_t r = 0; r < o.h; ++r)
        for (std::size_t q = 0; q < o.w; ++q) {
          auto [ct, slot] = pool_slot(p, c, z * p.zd, r * p.zh, q * p.zw);
          y[o.index(c, z, r, q)] = slots[ct][slot];
        }
  return y;
}

std::vector<u64> rotate_sum_plain(const PoolPlan& p, std::span<const u64> slots, const Modulus& m) {
  const std::size_t row = p.row_size;
  if (slots.size() != 2 * row) throw ParamError("slot vector length mismatch");
  std::vector<u64> cur(slots.begin(), slots.end());
  const auto rotate_add = [&](const std::vector<u64>& base, std::size_t count, std::size_t stride) {
    std::vector<u64> acc = base;
    for (std::size_t i = 1; i < count; ++i)
      for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t j = 0; j < row; ++j) acc[r * row + j] = m.add(acc[r * row + j], base[r * row + (j + i * stride) % row]);
    return acc;
  };
  cur = rotate_add(cur, p.zw, 1);
  cur = rotate_add(cur, p.zh, p.pw);
  cur = rotate_add(cur, p.zd, p.pw * p.ph);
  return cur;
}

ShareVector avg_pool(Session& s, const ShareVector& x, const PoolPlan& plan) {
  ScopedTimer timer(s, Category::avgpool, plan.out().volume());
  require_size(x, plan.in.volume(), "avg_pool");
  const std::size_t n = s.params().n();
  const std::size_t nct = plan.ciphertexts();
  auto packed = pack_pool(plan, x.values, n);
  if (s.is_alice()) {
    std::vector<Ciphertext> cts;
    for (auto& v : packed) cts.push_back(s.encryptor().encrypt(PlainVector{std::move(v), Encoding::slots}, s.rng()));
    send_ciphertexts(s, cts);
    const auto outs = recv_ciphertexts(s, nct);
    std::vector<std::vector<u64>> dec;
    for (const auto& c : outs) {
      check_budget(s, c);
      dec.push_back(s.decryptor().decrypt(c).values);
    }
    return make_share(s.role(), unpack_pool(plan, dec), plan.out());
  }
  const Evaluator& ev = s.evaluator();
  const RotationKeySet& keys = s.rotation_keys();
  auto cts = recv_ciphertexts(s, nct);
  std::vector<Ciphertext> outs;
  std::vector<std::vector<u64>> masks;
  const auto rotate_add = [&](const Ciphertext& base, std::size_t count, std::size_t stride) {
    Ciphertext acc = base;
    for (std::size_t i = 1; i < count; ++i) ev.add_inplace(acc, ev.rot(base, i * stride, keys));
    return acc;
  };
  for (std::size_t j = 0; j < nct; ++j) {
    if (cts[j].layout != Encoding::slots) throw ProtocolAbort("pooling needs slot-encoded ciphertexts");
    Ciphertext c = ev.add_plain(cts[j], PlainVector{std::move(packed[j]), Encoding::slots});
    c = rotate_add(c, plan.zw, 1);
    c = rotate_add(c, plan.zh, plan.pw);
    c = rotate_add(c, plan.zd, plan.pw * plan.ph);
    ev.to_coeff(c);
    check_budget(s, c);
    auto r = random_vector(s.rng(), n, s.p());
    outs.push_back(ev.sub_plain(c, PlainVector{r, Encoding::slots}));
    masks.push_back(std::move(r));
  }
  send_ciphertexts(s, outs);
  return make_share(s.role(), unpack_pool(plan, masks), plan.out());
}

ShareVector max_pool(Session& s, const ShareVector& x, const Shape& in, std::size_t zd, std::size_t zh,
                     std::size_t zw) {
  require_size(x, in.volume(), "max_pool");
  if (in.d % zd || in.h % zh || in.w % zw) throw ParamError("pooling window does not divide " + to_string(in));
  const Shape o{in.c, in.d / zd, in.h / zh, in.w / zw};
  ScopedTimer timer(s, Category::maxpool_gc, o.volume());
  const std::size_t window = zd * zh * zw;
  std::vector<std::size_t> gather;
  gather.reserve(o.volume() * window);
  for (std::size_t c = 0; c < o.c; ++c)
    for (std::size_t z = 0; z < o.d; ++z)
      for (std::size_t r = 0; r < o.h; ++r)
        for (std::size_t q = 0; q < o.w; ++q)
          for (std::size_t a = 0; a < zd; ++a)
            for (std::size_t b = 0; b < zh; ++b)
              for (std::size_t e = 0; e < zw; ++e) gather.push_back(in.index(c, z * zd + a, r * zh + b, q * zw + e));
  if (window == 1) {
    std::vector<u64> y(gather.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = x.values[gather[i]];
    return make_share(s.role(), std::move(y), o);
  }
  const Modulus& p = s.p();
  const int k = bit_width_for(p.value());
  const BoolCircuit& c = s.circuit("maxpool." + std::to_string(window),
                                   [&] { return circuits::maxpool(static_cast<int>(window), k, p.value()); });
  return gc_reshare(s, c, x, window, gather, timer, o);
}

// ---- layout and readout ---------------------------------------------------

ShareVector concat(const ShareVector& a, const Shape& sa, const ShareVector& b, const Shape& sb) {
  if (sb.volume() == 0) return a;
  if (sa.volume() == 0) return b;
  if (sa.d != sb.d || sa.h != sb.h || sa.w != sb.w) throw ParamError("concat: spatial dims differ");
  require_size(a, sa.volume(), "concat");
  require_size(b, sb.volume(), "concat");
  if (a.owner != b.owner) throw ParamError("concat: shares from different parties");
  std::vector<u64> v(a.values);
  v.insert(v.end(), b.values.begin(), b.values.end());
  return make_share(a.owner, std::move(v), Shape{sa.c + sb.c, sa.d, sa.h, sa.w});
}

std::vector<u32> readout_argmax(Session& s, const ShareVector& x, const Shape& in) {
  require_size(x, in.volume(), "readout_argmax");
  const std::size_t pixels = in.spatial();
  ScopedTimer timer(s, Category::argmax_gc, pixels);
  const Modulus& p = s.p();
  const int k = bit_width_for(p.value());
  if (in.c == 1) {
    if (s.is_alice()) return std::vector<u32>(pixels, 0);
    return {};
  }
  const BoolCircuit& c = s.circuit("argmax." + std::to_string(in.c),
                                   [&] { return circuits::argmax(static_cast<int>(in.c), k, p.value()); });
  std::vector<u8> bits;
  bits.reserve(pixels * in.c * k);
  for (std::size_t px = 0; px < pixels; ++px)
    for (std::size_t ch = 0; ch < in.c; ++ch) push_bits(bits, x.values[ch * pixels + px], k);
  const auto out = run_gc(s, c, pixels, bits, timer);
  if (!s.is_alice()) return {};
  const std::size_t ib = c.outputs.size();
  std::vector<u32> labels(pixels);
  for (std::size_t px = 0; px < pixels; ++px) {
    labels[px] = static_cast<u32>(read_bits(std::span(out).subspan(px * ib, ib), static_cast<int>(ib)));
    if (labels[px] >= in.c) throw ProtocolAbort("argmax output out of range");
  }
  return labels;
}

}  // namespace bunet
