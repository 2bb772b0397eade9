#include "emohead/serve/zip.hpp"

#include <stdexcept>

#include <zlib.h>

namespace emohead::serve {

namespace {

constexpr std::uint16_t kDosDate = (0 << 9) | (1 << 5) | 1;  // 1980-01-01
constexpr std::uint16_t kDosTime = 0;

void put16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

void put32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get(const std::string& b, std::size_t at, int bytes) {
  if (at + bytes > b.size()) throw std::runtime_error("zip: truncated archive");
  std::uint32_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + i])) << (8 * i);
  return v;
}

}  // namespace

std::uint32_t crc32_of(const std::string& data) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(data.data()), static_cast<uInt>(data.size()));
  return static_cast<std::uint32_t>(crc);
}

std::string make_zip(const std::vector<ZipEntry>& entries) {
  std::string out;
  std::string central;
  for (const ZipEntry& e : entries) {
    if (e.data.size() > 0xffffffffu || e.name.size() > 0xffff) throw std::runtime_error("zip: entry too large");
    const auto offset = static_cast<std::uint32_t>(out.size());
    const std::uint32_t crc = crc32_of(e.data);
    const auto size = static_cast<std::uint32_t>(e.data.size());

    put32(out, 0x04034b50);
    put16(out, 10);  // version needed
    put16(out, 0);   // flags
    put16(out, 0);   // stored
    put16(out, kDosTime);
    put16(out, kDosDate);
    put32(out, crc);
    put32(out, size);
    put32(out, size);
    put16(out, static_cast<std::uint16_t>(e.name.size()));
    put16(out, 0);
    out += e.name;
    out += e.data;

    put32(central, 0x02014b50);
    put16(central, 20);  // made by
    put16(central, 10);
    put16(central, 0);
    put16(central, 0);
    put16(central, kDosTime);
    put16(central, kDosDate);
    put32(central, crc);
    put32(central, size);
    put32(central, size);
    put16(central, static_cast<std::uint16_t>(e.name.size()));
    put16(central, 0);  // extra
    put16(central, 0);  // comment
    put16(central, 0);  // disk
    put16(central, 0);  // internal attrs
    put32(central, 0);  // external attrs
    put32(central, offset);
    central += e.name;
  }
  const auto central_offset = static_cast<std::uint32_t>(out.size());
  out += central;
  put32(out, 0x06054b50);
  put16(out, 0);
  put16(out, 0);
  put16(out, static_cast<std::uint16_t>(entries.size()));
  put16(out, static_cast<std::uint16_t>(entries.size()));
  put32(out, static_cast<std::uint32_t>(central.size()));
  put32(out, central_offset);
  put16(out, 0);
  return out;
}

std::vector<ZipEntry> read_zip(const std::string& bytes) {
  std::vector<ZipEntry> out;
  std::size_t at = 0;
  while (get(bytes, at, 4) == 0x04034b50) {
    if (get(bytes, at + 8, 2) != 0) throw std::runtime_error("zip: only stored entries are supported");
    const std::uint32_t crc = get(bytes, at + 14, 4);
    const std::uint32_t size = get(bytes, at + 18, 4);
    const std::uint32_t name_len = get(bytes, at + 26, 2);
    const std::uint32_t extra_len = get(bytes, at + 28, 2);
    const std::size_t name_at = at + 30;
    const std::size_t data_at = name_at + name_len + extra_len;
    if (data_at + size > bytes.size()) throw std::runtime_error("zip: truncated entry");
    ZipEntry e{bytes.substr(name_at, name_len), bytes.substr(data_at, size)};
    if (crc32_of(e.data) != crc) throw std::runtime_error("zip: CRC mismatch in " + e.name);
    out.push_back(std::move(e));
    at = data_at + size;
  }
  return out;
}

}  // namespace emohead::serve
