#pragma once

#include <span>
#include <string>
#include <vector>

#include "bunet/mpc.hpp"
#include "bunet/session.hpp"

namespace bunet {

// Logical tensor shape c x d x h x w; 2D tensors use d = 1. Raster order is
// channel-major, then depth, height, width fastest.
struct Shape {
  std::size_t c = 1, d = 1, h = 1, w = 1;

  std::size_t spatial() const { return d * h * w; }
  std::size_t volume() const { return c * d * h * w; }
  std::size_t index(std::size_t ch, std::size_t z, std::size_t y, std::size_t x) const {
    return ((ch * d + z) * h + y) * w + x;
  }
  std::vector<std::size_t> dims() const { return {c, d, h, w}; }
  bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& s);

// Filter geometry. Tap t along an axis reads input offset t + origin, so a
// 3-wide "same" convolution has origin -1.
struct Kernel {
  std::size_t kd = 1, kh = 1, kw = 1;
  int od = 0, oh = 0, ow = 0;

  std::size_t taps() const { return kd * kh * kw; }
  static Kernel same(std::size_t kd, std::size_t kh, std::size_t kw);
  bool operator==(const Kernel&) const = default;
};

// Bob's plaintext filter bank, (cout, cin, kd, kh, kw) row-major, plus an
// optional per-output-channel bias.
struct ConvWeights {
  std::size_t cout = 0, cin = 0;
  Kernel kernel;
  std::vector<i64> w;
  std::vector<i64> bias;

  i64 at(std::size_t co, std::size_t ci, std::size_t t) const { return w[(co * cin + ci) * kernel.taps() + t]; }
};

// ---- HomConv ----------------------------------------------------------------

// Overlap-save tiling. Each tile holds an interior block plus a halo of the
// filter reach, laid out (z, y, x) with x fastest; several tiles share one
// polynomial when they fit. When a whole channel fits with room to spare,
// several input channels share a polynomial at offsets of one channel block;
// the filter polynomial shifts each channel's taps back so their sum lands
// in block 0 and the cross terms fall outside its interior.
struct ConvPlan {
  Shape in;
  std::size_t cout = 0;
  Kernel kernel;
  std::size_t td = 0, th = 0, tw = 0;  // tile interior
  std::size_t pd = 0, ph = 0, pw = 0;  // padded tile
  std::size_t nd = 0, nh = 0, nw = 0;  // tiles per axis
  std::size_t tiles_per_poly = 1;
  std::size_t channels_per_poly = 1;

  std::size_t padded_volume() const { return pd * ph * pw; }
  std::size_t tiles() const { return nd * nh * nw; }
  std::size_t polys() const { return (tiles() + tiles_per_poly - 1) / tiles_per_poly; }
  std::size_t channel_block() const { return tiles() * padded_volume(); }
  std::size_t channel_groups() const { return (in.c + channels_per_poly - 1) / channels_per_poly; }
  Shape out() const { return Shape{cout, in.d, in.h, in.w}; }
};

ConvPlan plan_conv(const Shape& in, std::size_t cout, const Kernel& k, std::size_t n);
// Throws ParamError unless the linear-convolution region fits.
void validate(const ConvPlan& plan, std::size_t n);

// One channel (d*h*w residues) into plan.polys() coefficient vectors of
// length n, and the valid outputs back.
std::vector<std::vector<u64>> pack_channel(const ConvPlan& plan, std::span<const u64> channel, std::size_t n);
void unpack_channel(const ConvPlan& plan, std::span<const std::vector<u64>> polys, std::span<u64> channel);
// Polynomial whose product with a packed tile yields the correlation with
// the taps at every interior position.
std::vector<u64> filter_poly(const ConvPlan& plan, std::span<const i64> taps, const Modulus& p, std::size_t n);

// Both parties call with the same public shapes; Bob passes the weights.
// Returns this party's share of the (cout, d, h, w) output.
ShareVector hom_conv(Session& s, const ShareVector& x, const Shape& in, std::size_t cout, const Kernel& k,
                     const ConvWeights* weights);

// ---- transposed convolution ------------------------------------------------

// Inserts stride-1 zeros after every element along each axis.
Shape interleaved_shape(const Shape& in, std::size_t sd, std::size_t sh, std::size_t sw);
std::vector<u64> interleave_zeros(std::span<const u64> x, const Shape& in, std::size_t sd, std::size_t sh,
                                  std::size_t sw);
// Transposed-conv filter (stride = kernel size) as a flipped correlation
// kernel over the interleaved input.
ConvWeights flip_for_transposed(const ConvWeights& w);
Kernel transposed_kernel(std::size_t kd, std::size_t kh, std::size_t kw);

ShareVector transposed_conv(Session& s, const ShareVector& x, const Shape& in, std::size_t cout, std::size_t kd,
                            std::size_t kh, std::size_t kw, const ConvWeights* weights);

// ---- activations and requantization ---------------------------------------

enum class ActKind : u8 { relu = 0, square = 1 };
const char* act_kind_name(ActKind k);

// Garbler inputs are Alice's bits, evaluator inputs Bob's; returns Alice's
// decoded output bits (empty for Bob).
std::vector<u8> run_gc(Session& s, const BoolCircuit& c, std::size_t instances, std::span<const u8> bits,
                       ScopedTimer& timer);

// min(ReLU(v) >> f, clamp), resharing inside the circuit.
ShareVector relu(Session& s, const ShareVector& x, int shift, u64 clamp, const std::string& label = "relu");
// x^2 with one Beaver triple per element (the same sharing for both
// factors).
ShareVector square(Session& s, const ShareVector& x);
// floor(v / 2^f): exact mode clamps to [-clamp, clamp] inside a circuit;
// probabilistic mode needs |v| < bound and may add one.
ShareVector truncate(Session& s, const ShareVector& x, int shift, u64 clamp, u64 bound, const std::string& label);

struct ActQuant {
  int shift = 0;          // requantization of the preceding product
  int square_shift = 0;   // applied after squaring
  u64 clamp = 127;
  u64 bound = 0;          // |input| bound for probabilistic truncation
  u64 square_bound = 0;
};
ShareVector activation(Session& s, const ShareVector& x, ActKind kind, const ActQuant& q, const std::string& label);

// ---- pooling ---------------------------------------------------------------

// Pool tiles (multiples of the window) are packed contiguously into slot
// rows; the window sum is built from within-row rotations by 1, pw and
// pw*ph.
struct PoolPlan {
  Shape in;
  std::size_t zd = 1, zh = 1, zw = 1;
  std::size_t pd = 0, ph = 0, pw = 0;
  std::size_t nd = 0, nh = 0, nw = 0;
  std::size_t blocks_per_row = 0;
  std::size_t row_size = 0;

  std::size_t block_size() const { return pd * ph * pw; }
  std::size_t blocks() const { return in.c * nd * nh * nw; }
  std::size_t ciphertexts() const { return (blocks() + 2 * blocks_per_row - 1) / (2 * blocks_per_row); }
  Shape out() const { return Shape{in.c, in.d / zd, in.h / zh, in.w / zw}; }
  std::vector<std::size_t> rotation_steps() const;
};

PoolPlan plan_pool(const Shape& in, std::size_t zd, std::size_t zh, std::size_t zw, std::size_t n);
// Slot vectors (n each) holding x in the pool layout, and the reverse map
// from valid window-origin slots to the pooled tensor.
std::vector<std::vector<u64>> pack_pool(const PoolPlan& plan, std::span<const u64> x, std::size_t n);
std::vector<u64> unpack_pool(const PoolPlan& plan, std::span<const std::vector<u64>> slots);
// Plaintext model of the rotate-sum on one slot vector (for tests).
std::vector<u64> rotate_sum_plain(const PoolPlan& plan, std::span<const u64> slots, const Modulus& p);

// Window sums (the divisor is folded into the next requantization).
ShareVector avg_pool(Session& s, const ShareVector& x, const PoolPlan& plan);
ShareVector max_pool(Session& s, const ShareVector& x, const Shape& in, std::size_t zd, std::size_t zh,
                     std::size_t zw);

// ---- layout and readout ---------------------------------------------------

ShareVector concat(const ShareVector& a, const Shape& sa, const ShareVector& b, const Shape& sb);

// Alice receives the per-pixel label index; Bob gets an empty vector.
std::vector<u32> readout_argmax(Session& s, const ShareVector& x, const Shape& in);

}  // namespace bunet
