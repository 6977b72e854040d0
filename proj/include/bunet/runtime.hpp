#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>

#include "bunet/unet.hpp"

namespace bunet {

inline constexpr u32 kProtocolVersion = 1;

// First frame in each direction; a mismatch aborts before any payload.
struct Handshake {
  u32 version = kProtocolVersion;
  Digest spec_hash{}, params_hash{}, dealer_commitment{};
};

Digest params_hash(const RingParams& params);
std::vector<u8> serialize(const Handshake& h);
Handshake deserialize_handshake(std::span<const u8> bytes);

struct InferenceResult {
  std::vector<u32> labels;  // Alice only
  ShareVector logits;       // this party's share of the argmax input
  std::string receipt;      // hex transcript digest at the final checkpoint
};

// Runs one party. Alice passes the input (and optionally pre-generated
// keys), Bob the weights. On any error the transport is closed before the
// exception propagates, so the peer aborts too.
InferenceResult run_secure_inference(Session& s, const NetworkSpec& spec, const Tensor* input,
                                     const NetworkWeights* weights, std::optional<KeyMaterial> keys = std::nullopt);

struct DualRunOptions {
  SessionOptions alice, bob;
  std::optional<KeyMaterial> keys;
  // Applied to the endpoints before the parties start (tamper hooks).
  std::function<void(MemTransport& alice, MemTransport& bob)> configure;
};

struct DualRunResult {
  InferenceResult alice, bob;
  TimingLedger ledger;  // both parties merged
  TimingLedger alice_ledger, bob_ledger;
};

// Both parties on two threads over an in-memory channel.
DualRunResult run_in_process(const NetworkSpec& spec, const NetworkWeights& weights, const Tensor& input,
                             const DualRunOptions& options, const RingParams& params = RingParams::standard());

// Key generation for a spec: rotation steps come from the pooling plans.
KeyMaterial keygen_for(const NetworkSpec& spec, const RingParams& params, u64 seed);

// "BUNK" | u32 n | secret key (coeffs, eval) | public key | rotation keys.
// Alice's private file.
std::vector<u8> serialize(const KeyMaterial& keys, const RingParams& params);
KeyMaterial deserialize_keys(std::span<const u8> bytes, const RingParams& params);

struct TimingReport {
  std::string json;
  std::string text;
};

TimingReport timing_report(const TimingLedger& ledger, const NetworkSpec& spec,
                           const std::map<std::string, std::string>& meta = {});

}  // namespace bunet
