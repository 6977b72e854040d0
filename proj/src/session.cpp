#include "bunet/session.hpp"

#include <cstring>

#include "bunet/bytes.hpp"

namespace bunet {

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void accumulate(CategoryStats& a, const CategoryStats& b) {
  a.seconds += b.seconds;
  a.bytes_sent += b.bytes_sent;
  a.frames_sent += b.frames_sent;
  a.instances += b.instances;
  a.gc_and_gates += b.gc_and_gates;
  a.gc_table_rows += b.gc_table_rows;
}

}  // namespace

const char* category_name(Category c) {
  switch (c) {
    case Category::setup: return "setup";
    case Category::homconv: return "homconv";
    case Category::relu_gc: return "relu_gc";
    case Category::square_mt: return "square_mt";
    case Category::avgpool: return "avgpool";
    case Category::maxpool_gc: return "maxpool_gc";
    case Category::argmax_gc: return "argmax_gc";
    case Category::truncation: return "truncation";
    case Category::transport: return "transport";
  }
  return "unknown";
}

double TimingLedger::total_seconds() const {
  double s = 0;
  for (const auto& c : total) s += c.seconds;
  return s;
}

u64 TimingLedger::total_bytes() const {
  u64 b = 0;
  for (const auto& c : total) b += c.bytes_sent;
  return b;
}

void TimingLedger::add(Category c, const CategoryStats& delta) {
  accumulate(at(c), delta);
  accumulate(per_batch[current_batch][static_cast<std::size_t>(c)], delta);
}

void TimingLedger::merge(const TimingLedger& other) {
  for (std::size_t i = 0; i < kCategoryCount; ++i) accumulate(total[i], other.total[i]);
  for (const auto& [batch, cats] : other.per_batch)
    for (std::size_t i = 0; i < kCategoryCount; ++i) accumulate(per_batch[batch][i], cats[i]);
  idle_seconds += other.idle_seconds;
}

void Channel::send(FrameType type, std::span<const u8> payload) {
  const auto t0 = Clock::now();
  auto frame = encode_frame(type, next_send_++, payload);
  sent_.update(frame);
  bytes_sent_ += frame.size();
  t_.send(std::move(frame));
  transfer_ += since(t0);
}

std::vector<u8> Channel::recv(FrameType expected) {
  const auto t0 = Clock::now();
  const double idle0 = t_.idle_seconds();
  auto bytes = t_.recv();
  recv_.update(bytes);
  Frame f = decode_frame(bytes, t_.max_frame());
  transfer_ += since(t0) - (t_.idle_seconds() - idle0);
  if (f.seq != next_recv_)
    throw ProtocolAbort("frame sequence " + std::to_string(f.seq) + ", expected " + std::to_string(next_recv_));
  ++next_recv_;
  if (f.type != expected)
    throw ProtocolAbort(std::string("unexpected ") + frame_type_name(f.type) + " frame, expected " +
                        frame_type_name(expected));
  return std::move(f.payload);
}

void Trace::add(TraceRecord r) {
  std::lock_guard lock(mu_);
  records_.push_back(std::move(r));
}

std::vector<TraceRecord> Trace::records(Role role) const {
  std::lock_guard lock(mu_);
  std::vector<TraceRecord> out;
  for (const auto& r : records_)
    if (r.role == role) out.push_back(r);
  return out;
}

Session::Session(Role role, Transport& transport, const RingParams& params, SessionOptions options)
    : role_(role),
      params_(params),
      options_(options),
      channel_(transport),
      rng_(options.seed, role == Role::alice ? "bunet.session.alice" : "bunet.session.bob"),
      tape_(options.dealer_seed, role),
      evaluator_(params) {}

void Session::set_keys(KeyMaterial keys) {
  if (!is_alice()) throw ParamError("only Alice holds the secret key");
  keys_ = std::move(keys);
  encryptor_ = std::make_unique<Encryptor>(params_, keys_->sk);
  decryptor_ = std::make_unique<Decryptor>(params_, keys_->sk);
  rotations_ = keys_->rotations;
}

void Session::set_rotation_keys(RotationKeySet keys) { rotations_ = std::move(keys); }

const Encryptor& Session::encryptor() const {
  if (!encryptor_) throw ResourceError("no encryption key in this session");
  return *encryptor_;
}

const Decryptor& Session::decryptor() const {
  if (!decryptor_) throw ResourceError("no decryption key in this session");
  return *decryptor_;
}

const RotationKeySet& Session::rotation_keys() const {
  if (!rotations_) throw ResourceError("no rotation keys in this session");
  return *rotations_;
}

namespace {

std::vector<u8> checkpoint_payload(const std::string& label, const Digest& sent, const Digest& recv) {
  ByteWriter w;
  w.tag("CKPT");
  w.u16v(static_cast<u16>(label.size()));
  w.tag(label);
  w.bytes(sent);
  w.bytes(recv);
  return w.take();
}

void verify_checkpoint(std::span<const u8> payload, const std::string& label, const Digest& my_sent,
                       const Digest& my_recv) {
  ByteReader r(payload);
  r.expect_tag("CKPT");
  const u16 len = r.u16v();
  auto l = r.bytes(len);
  if (std::string(l.begin(), l.end()) != label) throw ProtocolAbort("checkpoint label mismatch at " + label);
  auto peer_sent = r.bytes(32);
  auto peer_recv = r.bytes(32);
  r.expect_end();
  if (std::memcmp(peer_sent.data(), my_recv.data(), 32) != 0)
    throw ProtocolAbort("transcript mismatch at checkpoint " + label + ": frames were altered in transit");
  if (std::memcmp(peer_recv.data(), my_sent.data(), 32) != 0)
    throw ProtocolAbort("transcript mismatch at checkpoint " + label + ": peer saw different frames");
}

}  // namespace

void Session::checkpoint(const std::string& label) {
  if (is_alice()) {
    channel_.send(FrameType::control, checkpoint_payload(label, channel_.sent_digest(), channel_.recv_digest()));
    const Digest s = channel_.sent_digest(), r = channel_.recv_digest();
    verify_checkpoint(channel_.recv(FrameType::control), label, s, r);
  } else {
    const Digest s = channel_.sent_digest(), r = channel_.recv_digest();
    verify_checkpoint(channel_.recv(FrameType::control), label, s, r);
    channel_.send(FrameType::control, checkpoint_payload(label, channel_.sent_digest(), channel_.recv_digest()));
  }
}

Block Session::next_garble_seed() {
  return derive_key(options_.seed, "bunet.garble." + std::to_string(garble_counter_++));
}

u64 Session::reserve_tweaks(u64 count) {
  const u64 first = tweak_next_;
  tweak_next_ += count;
  return first;
}

const BoolCircuit& Session::circuit(const std::string& key, const std::function<BoolCircuit()>& build) {
  auto it = circuits_.find(key);
  if (it == circuits_.end()) it = circuits_.emplace(key, build()).first;
  return it->second;
}

void Session::send_residues(FrameType type, std::span<const u64> v) {
  ByteWriter w;
  w.data().reserve(4 + 4 * v.size());
  w.u32v(static_cast<u32>(v.size()));
  for (u64 x : v) w.u32v(static_cast<u32>(x));
  channel_.send(type, w.data());
}

std::vector<u64> Session::recv_residues(FrameType type, std::size_t expected) {
  const auto payload = channel_.recv(type);
  ByteReader r(payload);
  const u32 n = r.u32v();
  if (n != expected || r.remaining() != 4ULL * n)
    throw ProtocolAbort("residue vector of unexpected length " + std::to_string(n));
  std::vector<u64> v(n);
  for (auto& x : v) {
    x = r.u32v();
    if (x >= params_.p().value()) throw ProtocolAbort("residue out of range");
  }
  return v;
}

ScopedTimer::ScopedTimer(Session& s, Category c, u64 instances)
    : s_(s),
      c_(c),
      instances_(instances),
      t0_(Clock::now()),
      transfer0_(s.channel().transfer_seconds()),
      idle0_(s.channel().transport().idle_seconds()),
      bytes0_(s.channel().bytes_sent()),
      frames0_(s.channel().frames_sent()) {}

ScopedTimer::~ScopedTimer() {
  const double elapsed = since(t0_);
  const double transfer = s_.channel().transfer_seconds() - transfer0_;
  const double idle = s_.channel().transport().idle_seconds() - idle0_;
  CategoryStats d;
  d.seconds = std::max(0.0, elapsed - transfer - idle);
  d.bytes_sent = s_.channel().bytes_sent() - bytes0_;
  d.frames_sent = s_.channel().frames_sent() - frames0_;
  d.instances = instances_;
  d.gc_and_gates = and_gates_;
  d.gc_table_rows = rows_;
  s_.ledger().add(c_, d);
  CategoryStats t;
  t.seconds = transfer;
  s_.ledger().add(Category::transport, t);
  s_.ledger().idle_seconds += idle;
}

}  // namespace bunet
