#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace eskin {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian and written with native stores");

// 64-bit FNV-1a, used for provenance hashes.
class Fnv1a {
 public:
  void update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      state_ ^= p[i];
      state_ *= 0x100000001b3ULL;
    }
  }
  template <typename T>
    requires std::is_trivially_copyable_v<T>
  void add(const T& v) {
    update(&v, sizeof(T));
  }
  template <typename T>
    requires std::is_trivially_copyable_v<T>
  void add(std::span<const T> v) {
    update(v.data(), v.size_bytes());
  }
  void add(std::string_view s) { update(s.data(), s.size()); }
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::uint64_t hash_file(const std::string& path);
std::string hex64(std::uint64_t v);

template <typename T>
  requires std::is_trivially_copyable_v<T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
  requires std::is_trivially_copyable_v<T>
void write_array(std::ostream& os, std::span<const T> v) {
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size_bytes()));
}

// Throws IoError on short reads.
void read_exact(std::istream& is, void* dst, std::size_t n);

template <typename T>
  requires std::is_trivially_copyable_v<T>
T read_pod(std::istream& is) {
  T v;
  read_exact(is, &v, sizeof(T));
  return v;
}

template <typename T>
  requires std::is_trivially_copyable_v<T>
void read_array(std::istream& is, std::span<T> v) {
  read_exact(is, v.data(), v.size_bytes());
}

// Framed container used by the Jacobian, checkpoint and shard files:
//   8-byte magic | uint64 header length | UTF-8 JSON header | payload bytes.
void write_framed_header(std::ostream& os, std::string_view magic, const std::string& json_header);
// Reads magic and header; leaves the stream positioned at the payload.
std::string read_framed_header(std::istream& is, std::string_view magic, const std::string& what);

}  // namespace eskin
