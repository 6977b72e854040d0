#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "bunet/protocols.hpp"
#include "bunet/tensor.hpp"

namespace bunet {

enum class LayerKind : u8 { conv, activation, quantize, pool, tconv, concat_source, concat_sink, argmax };
enum class PoolKind : u8 { avg, max };
enum class Variant : u8 { baseline, relu_avg, hybrid, square };

const char* layer_kind_name(LayerKind k);
const char* pool_kind_name(PoolKind k);
const char* variant_name(Variant v);
LayerKind parse_layer_kind(const std::string& s);
Variant parse_variant(const std::string& s);

struct QuantParams {
  int weight_bits = 2;     // ternary
  int act_bits = 8;
  int weight_frac = 0;     // fixed-point fraction of exported weights
  i64 bias_max = 127;      // public bound on |bias|
  double headroom = 4.0;   // calibration margin on observed magnitudes

  i64 a_max() const { return (i64{1} << (act_bits - 1)) - 1; }
  i64 w_max() const { return (i64{1} << (weight_bits - 1)) - 1; }
};

// One row of the architecture. Which fields matter depends on the kind:
//  conv / tconv: cout, kernel (tconv: stride-sized, origin 0), weight index
//  activation:   act, shift applied to the preceding product
//  quantize:     shift (0 = pass-through)
//  pool:         pool kind and window
//  concat_*:     slot
struct Layer {
  LayerKind kind = LayerKind::conv;
  int batch = 0;
  std::string name;
  Shape in, out;
  Kernel kernel;
  std::size_t cout = 0;
  int weight_index = -1;
  ActKind act = ActKind::relu;
  int shift = 0;
  PoolKind pool = PoolKind::avg;
  std::size_t zd = 1, zh = 1, zw = 1;
  int slot = 0;

  bool operator==(const Layer&) const = default;
};

struct NetworkSpec {
  std::string name;
  Shape input;
  std::size_t labels = 0;
  Variant variant = Variant::baseline;
  QuantParams quant;
  std::vector<Layer> layers;

  // Throws ParamError naming the first layer whose dims do not chain.
  void validate() const;
  std::size_t weight_count() const;
  Digest hash() const;
};

std::string to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(const std::string& text);
void save_spec(const std::filesystem::path& path, const NetworkSpec& spec);
NetworkSpec load_spec(const std::filesystem::path& path);

// The 3D UNET encoder/decoder, layer batches 1..9. Spatial dims
// must be divisible by 8; d = 1 gives the 2D form.
NetworkSpec build_unet_architecture(const Shape& input, std::size_t labels, Variant variant,
                                        const QuantParams& quant = {}, std::size_t base_channels = 64);

struct Census {
  std::size_t convs = 0, transposed = 0, activations = 0, pools = 0, argmax = 0;
};
Census census(const NetworkSpec& spec);

// Activated neurons per layer batch, ascending by batch id.
std::vector<u64> activation_counts(const NetworkSpec& spec);

// ---- weights -----------------------------------------------------------------

struct NetworkWeights {
  std::vector<ConvWeights> convs;  // by Layer::weight_index
};

// Round-to-nearest fixed point at 2^-frac; values outside `bits` throw.
std::vector<i64> quantize_weights(std::span<const double> w, int frac, int bits);
NetworkWeights gen_synthetic_weights(const NetworkSpec& spec, u64 seed);
void check_weights(const NetworkSpec& spec, const NetworkWeights& w);

// Per conv: weights (cout, cin, kd, kh, kw) then bias (cout).
void save_weights(const std::filesystem::path& path, const NetworkWeights& w);
NetworkWeights load_weights(const std::filesystem::path& path, const NetworkSpec& spec);

// Activation-range input in (c, d, h, w) raster order.
Tensor gen_synthetic_input(const NetworkSpec& spec, u64 seed);

// ---- bounds and calibration ------------------------------------------------

// Worst-case magnitudes per layer output, and the truncation bounds the
// secure path hands to probabilistic truncation.
struct LayerBounds {
  u64 out = 0;         // max |value| leaving the layer
  u64 trunc_in = 0;    // max |value| entering a truncation (inclusive)
  u64 square_in = 0;   // bound on the squared value (square activations)
};

struct AnalysisReport {
  std::vector<LayerBounds> layers;
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

// Uses only public data (spec and quantization bounds), so both parties
// derive the same truncation bounds.
AnalysisReport analyze(const NetworkSpec& spec, const Modulus& p, TruncMode mode);
// Fails with ParamError listing the violations.
AnalysisReport require_sound(const NetworkSpec& spec, const Modulus& p, TruncMode mode);

// Chooses every activation and transposed-conv shift from one plaintext
// pass over a calibration input.
void calibrate(NetworkSpec& spec, const NetworkWeights& w, const Tensor& calibration_input, const Modulus& p);

// ---- plaintext reference -----------------------------------------------------

struct OracleResult {
  std::vector<u32> labels;            // per pixel
  Tensor logits;                      // input of the argmax layer
  std::vector<Tensor> intermediates;  // output of every layer
};

// Identical integer pipeline to the secure path. Prob mode replaces the
// clamped truncations by plain floors.
OracleResult oracle_infer(const NetworkSpec& spec, const NetworkWeights& w, const Tensor& input, TruncMode mode,
                          const Modulus& p);

// Rotation steps needed by every average-pooling layer.
std::set<std::size_t> rotation_steps(const NetworkSpec& spec, std::size_t n);

}  // namespace bunet
