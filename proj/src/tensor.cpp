#include "bunet/tensor.hpp"

#include <fstream>
#include <iterator>

#include "bunet/bytes.hpp"

namespace bunet {

Tensor::Tensor(std::vector<std::size_t> d, std::vector<i64> v) : dims(std::move(d)), data(std::move(v)) {
  if (data.size() != volume(dims)) throw ParamError("tensor data does not match its dims");
}

std::size_t Tensor::volume(std::span<const std::size_t> dims) {
  std::size_t v = 1;
  for (std::size_t d : dims) v *= d;
  return v;
}

std::vector<u8> serialize(const Tensor& t) {
  if (t.dims.size() > 255) throw ParamError("tensor rank too large");
  ByteWriter w;
  w.tag("BUNT");
  w.u8v(kDtypeInt64);
  w.u8v(static_cast<u8>(t.dims.size()));
  for (std::size_t d : t.dims) {
    if (d > 0xffffffffu) throw ParamError("tensor dim too large");
    w.u32v(static_cast<u32>(d));
  }
  for (i64 x : t.data) w.i64v(x);
  return w.take();
}

Tensor deserialize_tensor(std::span<const u8> bytes, std::size_t& offset) {
  if (offset > bytes.size()) throw FormatError("tensor offset past end");
  ByteReader r(bytes.subspan(offset));
  r.expect_tag("BUNT");
  if (r.u8v() != kDtypeInt64) throw FormatError("unsupported tensor dtype");
  const u8 rank = r.u8v();
  Tensor t;
  t.dims.resize(rank);
  u64 vol = 1;
  for (auto& d : t.dims) {
    d = r.u32v();
    vol *= d;
    if (vol > r.remaining() / 8 + 1) throw FormatError("tensor volume exceeds record size");
  }
  if (vol * 8 > r.remaining()) throw FormatError("truncated tensor data");
  t.data.resize(vol);
  for (auto& x : t.data) x = r.i64v();
  offset = bytes.size() - r.remaining();
  return t;
}

Tensor deserialize_tensor(std::span<const u8> bytes) {
  std::size_t off = 0;
  Tensor t = deserialize_tensor(bytes, off);
  if (off != bytes.size()) throw FormatError("trailing bytes after tensor");
  return t;
}

std::vector<u8> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return std::vector<u8>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::filesystem::path& path, std::span<const u8> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write to " + path.string());
}

void write_tensors(const std::filesystem::path& path, std::span<const Tensor> tensors) {
  std::vector<u8> all;
  for (const Tensor& t : tensors) {
    auto b = serialize(t);
    all.insert(all.end(), b.begin(), b.end());
  }
  write_file(path, all);
}

std::vector<Tensor> read_tensors(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  std::vector<Tensor> out;
  std::size_t off = 0;
  while (off < bytes.size()) out.push_back(deserialize_tensor(bytes, off));
  if (out.empty()) throw FormatError(path.string() + " holds no tensors");
  return out;
}

void write_tensor(const std::filesystem::path& path, const Tensor& t) { write_file(path, serialize(t)); }

Tensor read_tensor(const std::filesystem::path& path) { return deserialize_tensor(read_file(path)); }

}  // namespace bunet
