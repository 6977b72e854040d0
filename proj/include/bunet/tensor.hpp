#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "bunet/common.hpp"

namespace bunet {

// Dense signed integer tensor, row-major (last dim fastest).
struct Tensor {
  std::vector<std::size_t> dims;
  std::vector<i64> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> d) : dims(std::move(d)), data(volume(dims), 0) {}
  Tensor(std::vector<std::size_t> d, std::vector<i64> v);

  static std::size_t volume(std::span<const std::size_t> dims);
  std::size_t size() const { return data.size(); }
  bool operator==(const Tensor&) const = default;
};

// "BUNT" | u8 dtype (1 = int64) | u8 rank | u32 dims | i64 values.
inline constexpr u8 kDtypeInt64 = 1;

std::vector<u8> serialize(const Tensor& t);
// Reads one record starting at `offset`, advancing it.
Tensor deserialize_tensor(std::span<const u8> bytes, std::size_t& offset);
Tensor deserialize_tensor(std::span<const u8> bytes);

// A file holds one or more back-to-back tensor records.
void write_tensors(const std::filesystem::path& path, std::span<const Tensor> tensors);
std::vector<Tensor> read_tensors(const std::filesystem::path& path);
void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);

std::vector<u8> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const u8> bytes);

}  // namespace bunet
