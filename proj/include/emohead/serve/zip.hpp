#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace emohead::serve {

struct ZipEntry {
  std::string name;
  std::string data;
};

/// Uncompressed ("stored") zip archive. Timestamps are fixed at 1980-01-01 so
/// equal entries give equal bytes.
std::string make_zip(const std::vector<ZipEntry>& entries);

/// Reads archives written by make_zip (stored entries only); checks CRCs.
std::vector<ZipEntry> read_zip(const std::string& bytes);

std::uint32_t crc32_of(const std::string& data);

}  // namespace emohead::serve
