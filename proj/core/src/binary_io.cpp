#include "eskin/binary_io.hpp"

#include <array>
#include <cstdio>
#include <fstream>

#include "eskin/error.hpp"

namespace eskin {

std::uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInput("cannot open " + path);
  Fnv1a h;
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.digest();
}

std::string hex64(std::uint64_t v) {
  char s[17];
  std::snprintf(s, sizeof s, "%016llx", static_cast<unsigned long long>(v));
  return s;
}

void read_exact(std::istream& is, void* dst, std::size_t n) {
  is.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) throw IoError("unexpected end of binary stream");
}

void write_framed_header(std::ostream& os, std::string_view magic, const std::string& json_header) {
  if (magic.size() != 8) throw InvalidArgument("framed file magic must be 8 bytes");
  os.write(magic.data(), 8);
  write_pod<std::uint64_t>(os, json_header.size());
  os.write(json_header.data(), static_cast<std::streamsize>(json_header.size()));
}

std::string read_framed_header(std::istream& is, std::string_view magic, const std::string& what) {
  std::array<char, 8> got{};
  is.read(got.data(), 8);
  if (is.gcount() != 8 || std::string_view(got.data(), 8) != magic)
    throw IoError(what + ": bad magic, expected " + std::string(magic));
  const auto len = read_pod<std::uint64_t>(is);
  if (len > (1ULL << 30)) throw IoError(what + ": header length out of range");
  std::string header(len, '\0');
  read_exact(is, header.data(), len);
  return header;
}

}  // namespace eskin
