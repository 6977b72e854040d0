#include "bunet/crypto.hpp"

#include <cstring>

#include <openssl/evp.h>
#include <wmmintrin.h>

namespace bunet {

Block gf_double(const Block& b) {
  const u64 hi = b.hi();
  const u64 lo = b.lo();
  u64 new_hi = (hi << 1) | (lo >> 63);
  u64 new_lo = lo << 1;
  if (hi >> 63) new_lo ^= 0x87;
  return Block(new_hi, new_lo);
}

namespace {

template <int Rcon>
__m128i expand_step(__m128i key) {
  __m128i t = _mm_aeskeygenassist_si128(key, Rcon);
  t = _mm_shuffle_epi32(t, 0xff);
  key = _mm_xor_si128(key, _mm_slli_si128(key, 4));
  key = _mm_xor_si128(key, _mm_slli_si128(key, 4));
  key = _mm_xor_si128(key, _mm_slli_si128(key, 4));
  return _mm_xor_si128(key, t);
}

}  // namespace

Aes128::Aes128(const Block& key) {
  round_keys_[0] = key.v;
  round_keys_[1] = expand_step<0x01>(round_keys_[0]);
  round_keys_[2] = expand_step<0x02>(round_keys_[1]);
  round_keys_[3] = expand_step<0x04>(round_keys_[2]);
  round_keys_[4] = expand_step<0x08>(round_keys_[3]);
  round_keys_[5] = expand_step<0x10>(round_keys_[4]);
  round_keys_[6] = expand_step<0x20>(round_keys_[5]);
  round_keys_[7] = expand_step<0x40>(round_keys_[6]);
  round_keys_[8] = expand_step<0x80>(round_keys_[7]);
  round_keys_[9] = expand_step<0x1b>(round_keys_[8]);
  round_keys_[10] = expand_step<0x36>(round_keys_[9]);
}

Block Aes128::encrypt(const Block& in) const {
  __m128i s = _mm_xor_si128(in.v, round_keys_[0]);
  for (int r = 1; r < 10; ++r) s = _mm_aesenc_si128(s, round_keys_[r]);
  return Block(_mm_aesenclast_si128(s, round_keys_[10]));
}

void Aes128::encrypt_blocks(std::span<Block> blocks) const {
  // Eight-wide interleaving keeps the AES pipeline full.
  std::size_t i = 0;
  for (; i + 8 <= blocks.size(); i += 8) {
    __m128i s[8];
    for (int k = 0; k < 8; ++k) s[k] = _mm_xor_si128(blocks[i + k].v, round_keys_[0]);
    for (int r = 1; r < 10; ++r)
      for (int k = 0; k < 8; ++k) s[k] = _mm_aesenc_si128(s[k], round_keys_[r]);
    for (int k = 0; k < 8; ++k) blocks[i + k].v = _mm_aesenclast_si128(s[k], round_keys_[10]);
  }
  for (; i < blocks.size(); ++i) blocks[i] = encrypt(blocks[i]);
}

GateHash::GateHash() : pi_(Block(0x243f6a8885a308d3ULL, 0x13198a2e03707344ULL)) {}

Block GateHash::operator()(const Block& a, const Block& b, u64 tweak) const {
  const Block k = gf_double(a) ^ gf_double(gf_double(b)) ^ Block(0, tweak);
  return pi_.encrypt(k) ^ k;
}

Digest sha256(std::span<const u8> data) {
  Digest out{};
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr);
  return out;
}

Digest sha256(std::string_view data) {
  return sha256(std::span<const u8>(reinterpret_cast<const u8*>(data.data()), data.size()));
}

std::string to_hex(std::span<const u8> bytes) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  s.reserve(bytes.size() * 2);
  for (u8 b : bytes) {
    s.push_back(digits[b >> 4]);
    s.push_back(digits[b & 15]);
  }
  return s;
}

Sha256::Sha256() : ctx_(EVP_MD_CTX_new()) {
  EVP_DigestInit_ex(static_cast<EVP_MD_CTX*>(ctx_), EVP_sha256(), nullptr);
}

Sha256::~Sha256() {
  if (ctx_) EVP_MD_CTX_free(static_cast<EVP_MD_CTX*>(ctx_));
}

Sha256::Sha256(Sha256&& other) noexcept : ctx_(other.ctx_) { other.ctx_ = nullptr; }

Sha256& Sha256::operator=(Sha256&& other) noexcept {
  if (this != &other) {
    if (ctx_) EVP_MD_CTX_free(static_cast<EVP_MD_CTX*>(ctx_));
    ctx_ = other.ctx_;
    other.ctx_ = nullptr;
  }
  return *this;
}

void Sha256::update(std::span<const u8> data) {
  EVP_DigestUpdate(static_cast<EVP_MD_CTX*>(ctx_), data.data(), data.size());
}

Digest Sha256::peek() const {
  EVP_MD_CTX* copy = EVP_MD_CTX_new();
  EVP_MD_CTX_copy_ex(copy, static_cast<EVP_MD_CTX*>(ctx_));
  Digest out{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(copy, out.data(), &len);
  EVP_MD_CTX_free(copy);
  return out;
}

Block derive_key(u64 seed, std::string_view domain) {
  std::string material(domain);
  material.push_back('\0');
  for (int i = 0; i < 8; ++i) material.push_back(static_cast<char>((seed >> (8 * i)) & 0xff));
  const Digest d = sha256(material);
  u64 lo = 0, hi = 0;
  std::memcpy(&lo, d.data(), 8);
  std::memcpy(&hi, d.data() + 8, 8);
  return Block(hi, lo);
}

Prg::Prg(const Block& key) : aes_(key) {}

void Prg::refill() {
  for (auto& b : buffer_) b = Block(0, counter_++);
  aes_.encrypt_blocks(buffer_);
  used_ = 0;
}

Block Prg::next_block() {
  if (used_ == buffer_.size()) refill();
  return buffer_[used_++];
}

u64 Prg::next_u64() {
  if (have_half_) {
    have_half_ = false;
    return half_;
  }
  const Block b = next_block();
  half_ = b.hi();
  have_half_ = true;
  return b.lo();
}

u32 Prg::next_u32() { return static_cast<u32>(next_u64()); }

bool Prg::next_bit() {
  if (bits_left_ == 0) {
    bit_pool_ = next_u64();
    bits_left_ = 64;
  }
  const bool b = bit_pool_ & 1;
  bit_pool_ >>= 1;
  --bits_left_;
  return b;
}

u64 Prg::uniform(u64 bound) {
  if (bound == 0) throw ParamError("Prg::uniform: bound must be positive");
  if ((bound & (bound - 1)) == 0) return next_u64() & (bound - 1);
  const u64 limit = UINT64_MAX - (UINT64_MAX % bound);
  for (;;) {
    const u64 x = next_u64();
    if (x < limit) return x % bound;
  }
}

void Prg::fill_uniform(std::span<u64> out, u64 bound) {
  for (auto& x : out) x = uniform(bound);
}

}  // namespace bunet
