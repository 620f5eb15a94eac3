#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace xview {

// Writes to "<path>.tmp.<pid>" and renames over the target, so readers never
// observe a half-written file.
void atomic_write(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void atomic_write(const std::filesystem::path& path, std::string_view text);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
std::string read_file_text(const std::filesystem::path& path);

// 64-bit FNV-1a.
class Fnv1a64 {
 public:
  void update(std::span<const std::uint8_t> bytes);
  void update(std::string_view text);
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);
std::string hex64(std::uint64_t value);

// Little-endian scalar packing.
template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
  }
}

template <typename T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t offset) {
  static_assert(std::is_unsigned_v<T>);
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    value |= static_cast<T>(bytes[offset + i]) << (8 * i);
  }
  return value;
}

}  // namespace xview
