#pragma once

#include <array>
#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "bunet/crypto.hpp"
#include "bunet/gc.hpp"
#include "bunet/mpc.hpp"
#include "bunet/pahe.hpp"
#include "bunet/transport.hpp"

namespace bunet {

// ---- timing -------------------------------------------------------------

enum class Category : u8 { setup, homconv, relu_gc, square_mt, avgpool, maxpool_gc, argmax_gc, truncation, transport };
inline constexpr std::size_t kCategoryCount = 9;
const char* category_name(Category c);

struct CategoryStats {
  double seconds = 0;
  u64 bytes_sent = 0;
  u64 frames_sent = 0;
  u64 instances = 0;   // activations, pooled outputs, truncated elements...
  u64 gc_and_gates = 0;
  u64 gc_table_rows = 0;
};

// Wall time and traffic per primitive. Transport holds only time spent
// moving bytes; waiting for the peer is kept in idle_seconds, outside the
// total.
struct TimingLedger {
  std::array<CategoryStats, kCategoryCount> total{};
  std::map<int, std::array<CategoryStats, kCategoryCount>> per_batch;
  double idle_seconds = 0;
  int current_batch = 0;

  CategoryStats& at(Category c) { return total[static_cast<std::size_t>(c)]; }
  const CategoryStats& at(Category c) const { return total[static_cast<std::size_t>(c)]; }
  double total_seconds() const;
  u64 total_bytes() const;

  void add(Category c, const CategoryStats& delta);
  void merge(const TimingLedger& other);
};

// ---- channel --------------------------------------------------------------

// Frames with sequence numbers and running transcript digests of every
// frame sent and received.
class Channel {
 public:
  explicit Channel(Transport& t) : t_(t) {}

  void send(FrameType type, std::span<const u8> payload);
  std::vector<u8> recv(FrameType expected);

  Digest sent_digest() const { return sent_.peek(); }
  Digest recv_digest() const { return recv_.peek(); }
  u64 frames_sent() const { return next_send_; }
  u64 frames_received() const { return next_recv_; }
  u64 bytes_sent() const { return bytes_sent_; }
  double transfer_seconds() const { return transfer_; }
  Transport& transport() { return t_; }

 private:
  Transport& t_;
  Sha256 sent_, recv_;
  u64 next_send_ = 0, next_recv_ = 0;
  u64 bytes_sent_ = 0;
  double transfer_ = 0;
};

// ---- debug trace ------------------------------------------------------------

// Shares of every requantization step, collected from both parties when
// the two run in one process. Test instrumentation only.
struct TraceRecord {
  std::string layer;
  std::string op;  // "relu" or "trunc"
  Role role = Role::alice;
  int shift = 0;
  TruncMode mode = TruncMode::exact;
  bool clamped = false;
  std::vector<u64> input, output;
};

class Trace {
 public:
  void add(TraceRecord r);
  std::vector<TraceRecord> records(Role role) const;

 private:
  mutable std::mutex mu_;
  std::vector<TraceRecord> records_;
};

// ---- session --------------------------------------------------------------

struct SessionOptions {
  u64 seed = 1;          // this party's private randomness
  u64 dealer_seed = 7;
  TruncMode trunc = TruncMode::exact;
  std::size_t gc_batch = 1024;   // garbled instances per frame
  bool explicit_dft = false;     // HomConv through slot-encoded spectra
  Trace* trace = nullptr;
};

class Session {
 public:
  Session(Role role, Transport& transport, const RingParams& params, SessionOptions options);

  Role role() const { return role_; }
  bool is_alice() const { return role_ == Role::alice; }
  const RingParams& params() const { return params_; }
  const Modulus& p() const { return params_.p(); }
  const SessionOptions& options() const { return options_; }
  Channel& channel() { return channel_; }
  TimingLedger& ledger() { return ledger_; }
  Prg& rng() { return rng_; }
  DealerTape& tape() { return tape_; }
  const Evaluator& evaluator() const { return evaluator_; }
  Trace* trace() { return options_.trace; }

  // Alice owns the key pair; Bob holds the rotation keys she publishes.
  void set_keys(KeyMaterial keys);
  void set_rotation_keys(RotationKeySet keys);
  const Encryptor& encryptor() const;
  const Decryptor& decryptor() const;
  const RotationKeySet& rotation_keys() const;

  // Both parties compare transcript digests; any divergence aborts.
  void checkpoint(const std::string& label);

  // Garbling material: fresh seed per batch and disjoint tweak ranges.
  Block next_garble_seed();
  u64 reserve_tweaks(u64 count);

  const BoolCircuit& circuit(const std::string& key, const std::function<BoolCircuit()>& build);

  // Payload helpers: residues as u32 words.
  void send_residues(FrameType type, std::span<const u64> v);
  std::vector<u64> recv_residues(FrameType type, std::size_t expected);

 private:
  Role role_;
  RingParams params_;
  SessionOptions options_;
  Channel channel_;
  TimingLedger ledger_;
  Prg rng_;
  DealerTape tape_;
  Evaluator evaluator_;
  std::optional<KeyMaterial> keys_;
  std::unique_ptr<Encryptor> encryptor_;
  std::unique_ptr<Decryptor> decryptor_;
  std::optional<RotationKeySet> rotations_;
  std::map<std::string, BoolCircuit> circuits_;
  u64 garble_counter_ = 0;
  u64 tweak_next_ = 0;
};

// Attributes elapsed wall time, minus transport work and idle waiting, and
// the bytes sent meanwhile to one category.
class ScopedTimer {
 public:
  ScopedTimer(Session& s, Category c, u64 instances = 0);
  ~ScopedTimer();
  ScopedTimer(const ScopedTimer&) = delete;
  ScopedTimer& operator=(const ScopedTimer&) = delete;

  void add_gc(u64 and_gates, u64 rows) {
    and_gates_ += and_gates;
    rows_ += rows;
  }

 private:
  Session& s_;
  Category c_;
  u64 instances_;
  u64 and_gates_ = 0, rows_ = 0;
  std::chrono::steady_clock::time_point t0_;
  double transfer0_, idle0_;
  u64 bytes0_, frames0_;
};

}  // namespace bunet
