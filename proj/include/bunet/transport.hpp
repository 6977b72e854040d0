#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bunet/common.hpp"

namespace bunet {

enum class FrameType : u8 { control = 0, ciphertext = 1, share = 2, gc_blob = 3, ot_block = 4 };
inline constexpr u8 kFrameTypeCount = 5;
const char* frame_type_name(FrameType t);

// Frame: u32 length of the rest | u8 type | u64 sequence number | payload.
inline constexpr std::size_t kFrameHeader = 13;
inline constexpr u32 kDefaultMaxFrame = 1u << 28;

struct Frame {
  FrameType type = FrameType::control;
  u64 seq = 0;
  std::vector<u8> payload;
};

std::vector<u8> encode_frame(FrameType type, u64 seq, std::span<const u8> payload);
Frame decode_frame(std::span<const u8> bytes, u32 max_frame = kDefaultMaxFrame);

// Ordered, reliable exchange of whole encoded frames.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual void send(std::vector<u8> frame) = 0;
  virtual std::vector<u8> recv() = 0;
  virtual void close() = 0;

  // Seconds spent waiting for the peer to produce data in recv(), as opposed
  // to moving bytes; kept apart so protocol timings exclude idle time.
  double idle_seconds() const { return idle_; }

  u32 max_frame() const { return max_frame_; }
  void set_max_frame(u32 m) { max_frame_ = m; }

 protected:
  double idle_ = 0;
  u32 max_frame_ = kDefaultMaxFrame;
};

struct MemQueue;

// In-process endpoint backed by a pair of queues.
class MemTransport : public Transport {
 public:
  MemTransport(std::shared_ptr<MemQueue> in, std::shared_ptr<MemQueue> out);
  ~MemTransport() override;

  void send(std::vector<u8> frame) override;
  std::vector<u8> recv() override;
  void close() override;

  // Test hook: called on every outgoing frame with its index.
  void set_tamper(std::function<void(u64 index, std::vector<u8>& frame)> f) { tamper_ = std::move(f); }
  void set_recv_timeout(std::chrono::milliseconds t) { timeout_ = t; }

 private:
  std::shared_ptr<MemQueue> in_, out_;
  std::function<void(u64, std::vector<u8>&)> tamper_;
  u64 sent_ = 0;
  std::chrono::milliseconds timeout_{std::chrono::minutes(30)};
};

std::pair<std::unique_ptr<MemTransport>, std::unique_ptr<MemTransport>> mem_pair();

// TCP endpoint. Addresses are "host:port".
class TcpTransport : public Transport {
  friend class TcpListener;

 public:
  static std::unique_ptr<TcpTransport> listen(const std::string& address);
  static std::unique_ptr<TcpTransport> connect(const std::string& address,
                                               std::chrono::milliseconds wait = std::chrono::seconds(30));
  ~TcpTransport() override;

  void send(std::vector<u8> frame) override;
  std::vector<u8> recv() override;
  void close() override;

 private:
  explicit TcpTransport(int fd) : fd_(fd) {}
  void write_all(const u8* p, std::size_t n);
  void read_all(u8* p, std::size_t n);

  int fd_ = -1;
};

// Port 0 picks a free port, readable through port().
class TcpListener {
 public:
  explicit TcpListener(const std::string& address);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  u16 port() const { return port_; }
  std::unique_ptr<TcpTransport> accept();

 private:
  int fd_ = -1;
  u16 port_ = 0;
};

std::pair<std::string, u16> split_address(const std::string& address);

}  // namespace bunet
