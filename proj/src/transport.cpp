#include "bunet/transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>
#include <thread>

#include "bunet/bytes.hpp"

namespace bunet {

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

}  // namespace

const char* frame_type_name(FrameType t) {
  switch (t) {
    case FrameType::control: return "control";
    case FrameType::ciphertext: return "ciphertext";
    case FrameType::share: return "share";
    case FrameType::gc_blob: return "gc-blob";
    case FrameType::ot_block: return "ot-block";
  }
  return "unknown";
}

std::vector<u8> encode_frame(FrameType type, u64 seq, std::span<const u8> payload) {
  const std::size_t rest = 9 + payload.size();
  if (rest > 0xffffffffu) throw ParamError("frame payload too large");
  ByteWriter w;
  w.data().reserve(4 + rest);
  w.u32v(static_cast<u32>(rest));
  w.u8v(static_cast<u8>(type));
  w.u64v(seq);
  w.bytes(payload);
  return w.take();
}

Frame decode_frame(std::span<const u8> bytes, u32 max_frame) {
  ByteReader r(bytes);
  const u32 rest = r.u32v();
  if (rest > max_frame) throw ProtocolAbort("frame of " + std::to_string(rest) + " bytes exceeds the limit");
  if (rest < 9 || rest != bytes.size() - 4) throw ProtocolAbort("frame length field does not match the frame");
  Frame f;
  const u8 type = r.u8v();
  if (type >= kFrameTypeCount) throw ProtocolAbort("unknown frame type " + std::to_string(type));
  f.type = static_cast<FrameType>(type);
  f.seq = r.u64v();
  auto p = r.bytes(r.remaining());
  f.payload.assign(p.begin(), p.end());
  return f;
}

// ---- in-process ---------------------------------------------------------------

struct MemQueue {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::vector<u8>> frames;
  bool closed = false;
};

MemTransport::MemTransport(std::shared_ptr<MemQueue> in, std::shared_ptr<MemQueue> out)
    : in_(std::move(in)), out_(std::move(out)) {}

MemTransport::~MemTransport() { close(); }

void MemTransport::send(std::vector<u8> frame) {
  if (frame.size() > static_cast<std::size_t>(max_frame_) + 4) throw ProtocolAbort("outgoing frame exceeds the limit");
  if (tamper_) tamper_(sent_, frame);
  ++sent_;
  std::lock_guard lock(out_->mu);
  if (out_->closed) throw ProtocolAbort("channel closed by peer");
  out_->frames.push_back(std::move(frame));
  out_->cv.notify_one();
}

std::vector<u8> MemTransport::recv() {
  const auto t0 = Clock::now();
  std::unique_lock lock(in_->mu);
  if (!in_->cv.wait_for(lock, timeout_, [&] { return !in_->frames.empty() || in_->closed; }))
    throw ProtocolAbort("timed out waiting for the peer");
  idle_ += since(t0);
  if (in_->frames.empty()) throw ProtocolAbort("channel closed by peer");
  auto f = std::move(in_->frames.front());
  in_->frames.pop_front();
  return f;
}

void MemTransport::close() {
  for (auto* q : {in_.get(), out_.get()}) {
    if (!q) continue;
    std::lock_guard lock(q->mu);
    q->closed = true;
    q->cv.notify_all();
  }
}

std::pair<std::unique_ptr<MemTransport>, std::unique_ptr<MemTransport>> mem_pair() {
  auto ab = std::make_shared<MemQueue>();
  auto ba = std::make_shared<MemQueue>();
  return {std::make_unique<MemTransport>(ba, ab), std::make_unique<MemTransport>(ab, ba)};
}

// ---- TCP ------------------------------------------------------------------

std::pair<std::string, u16> split_address(const std::string& address) {
  const auto colon = address.rfind(':');
  if (colon == std::string::npos) throw ParamError("address must be host:port, got \"" + address + "\"");
  const std::string host = address.substr(0, colon);
  const std::string port = address.substr(colon + 1);
  if (port.empty() || port.find_first_not_of("0123456789") != std::string::npos)
    throw ParamError("bad port in \"" + address + "\"");
  const unsigned long v = std::stoul(port);
  if (v > 65535) throw ParamError("port out of range in \"" + address + "\"");
  return {host.empty() ? "127.0.0.1" : host, static_cast<u16>(v)};
}

namespace {

sockaddr_in resolve(const std::string& host, u16 port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || !res) throw Error("cannot resolve host " + host);
  sockaddr_in sa{};
  std::memcpy(&sa, res->ai_addr, sizeof(sa));
  freeaddrinfo(res);
  sa.sin_port = htons(port);
  return sa;
}

void set_nodelay(int fd) {
  int one = 1;
  setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

}  // namespace

TcpListener::TcpListener(const std::string& address) {
  auto [host, port] = split_address(address);
  const sockaddr_in sa = resolve(host, port);
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw Error("socket() failed");
  int one = 1;
  setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  if (::bind(fd_, reinterpret_cast<const sockaddr*>(&sa), sizeof(sa)) != 0 || ::listen(fd_, 1) != 0) {
    const std::string why = std::strerror(errno);
    ::close(fd_);
    throw Error("cannot listen on " + address + ": " + why);
  }
  sockaddr_in bound{};
  socklen_t len = sizeof(bound);
  getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<TcpTransport> TcpListener::accept() {
  const int fd = ::accept(fd_, nullptr, nullptr);
  if (fd < 0) throw Error("accept failed on port " + std::to_string(port_));
  set_nodelay(fd);
  return std::unique_ptr<TcpTransport>(new TcpTransport(fd));
}

std::unique_ptr<TcpTransport> TcpTransport::listen(const std::string& address) { return TcpListener(address).accept(); }

std::unique_ptr<TcpTransport> TcpTransport::connect(const std::string& address, std::chrono::milliseconds wait) {
  auto [host, port] = split_address(address);
  const sockaddr_in sa = resolve(host, port);
  const auto deadline = Clock::now() + wait;
  // The listener may not be up yet; only connection setup is retried.
  while (true) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw Error("socket() failed");
    if (::connect(fd, reinterpret_cast<const sockaddr*>(&sa), sizeof(sa)) == 0) {
      set_nodelay(fd);
      return std::unique_ptr<TcpTransport>(new TcpTransport(fd));
    }
    ::close(fd);
    if (Clock::now() > deadline) throw Error("cannot connect to " + address + ": " + std::strerror(errno));
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
}

TcpTransport::~TcpTransport() { close(); }

void TcpTransport::close() {
  if (fd_ >= 0) {
    ::shutdown(fd_, SHUT_RDWR);
    ::close(fd_);
    fd_ = -1;
  }
}

void TcpTransport::write_all(const u8* p, std::size_t n) {
  while (n > 0) {
    if (fd_ < 0) throw ProtocolAbort("socket closed");
    const ssize_t k = ::send(fd_, p, n, MSG_NOSIGNAL);
    if (k <= 0) {
      if (k < 0 && errno == EINTR) continue;
      throw ProtocolAbort("connection lost while sending");
    }
    p += k;
    n -= static_cast<std::size_t>(k);
  }
}

void TcpTransport::read_all(u8* p, std::size_t n) {
  while (n > 0) {
    if (fd_ < 0) throw ProtocolAbort("socket closed");
    const ssize_t k = ::recv(fd_, p, n, 0);
    if (k <= 0) {
      if (k < 0 && errno == EINTR) continue;
      throw ProtocolAbort("connection closed by peer");
    }
    p += k;
    n -= static_cast<std::size_t>(k);
  }
}

void TcpTransport::send(std::vector<u8> frame) {
  if (frame.size() > static_cast<std::size_t>(max_frame_) + 4) throw ProtocolAbort("outgoing frame exceeds the limit");
  write_all(frame.data(), frame.size());
}

std::vector<u8> TcpTransport::recv() {
  const auto t0 = Clock::now();
  std::vector<u8> frame(4);
  read_all(frame.data(), 4);
  idle_ += since(t0);
  const u32 rest = static_cast<u32>(frame[0]) | static_cast<u32>(frame[1]) << 8 | static_cast<u32>(frame[2]) << 16 |
                   static_cast<u32>(frame[3]) << 24;
  if (rest > max_frame_) throw ProtocolAbort("incoming frame of " + std::to_string(rest) + " bytes exceeds the limit");
  frame.resize(4 + static_cast<std::size_t>(rest));
  read_all(frame.data() + 4, rest);
  return frame;
}

}  // namespace bunet
