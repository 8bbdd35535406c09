#include "skeyspot/zip.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <set>
#include <zlib.h>

#include "skeyspot/error.hpp"

namespace skeyspot {

namespace {

constexpr std::uint16_t kDosTime = 0;
constexpr std::uint16_t kDosDate = (0 << 9) | (1 << 5) | 1;  // 1980-01-01
constexpr std::uint16_t kVersion = 20;
constexpr std::uint16_t kUtf8Flag = 1 << 11;

void put16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

void put32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t crc_of(const std::string& data) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t off = 0;
  while (off < data.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(data.size() - off, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(data.data() + off), chunk);
    off += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::string write_zip(std::span<const ZipEntry> entries) {
  constexpr auto limit = std::numeric_limits<std::uint32_t>::max();
  if (entries.size() >= 0xffff) throw Error(ErrorCode::InvalidArgument, "zip: too many entries");
  std::set<std::string> seen;
  std::string out, central;
  for (const auto& e : entries) {
    if (e.name.empty() || e.name.size() >= 0xffff) throw Error(ErrorCode::InvalidArgument, "zip: bad entry name");
    if (!seen.insert(e.name).second) throw Error(ErrorCode::InvalidArgument, "zip: duplicate entry '" + e.name + "'");
    if (e.data.size() >= limit || out.size() >= limit) throw Error(ErrorCode::InvalidArgument, "zip: archive too large");

    const auto offset = static_cast<std::uint32_t>(out.size());
    const auto crc = crc_of(e.data);
    const auto size = static_cast<std::uint32_t>(e.data.size());
    const auto name_len = static_cast<std::uint16_t>(e.name.size());

    put32(out, 0x04034b50);
    put16(out, kVersion);
    put16(out, kUtf8Flag);
    put16(out, 0);  // stored
    put16(out, kDosTime);
    put16(out, kDosDate);
    put32(out, crc);
    put32(out, size);
    put32(out, size);
    put16(out, name_len);
    put16(out, 0);
    out += e.name;
    out += e.data;

    put32(central, 0x02014b50);
    put16(central, kVersion);
    put16(central, kVersion);
    put16(central, kUtf8Flag);
    put16(central, 0);
    put16(central, kDosTime);
    put16(central, kDosDate);
    put32(central, crc);
    put32(central, size);
    put32(central, size);
    put16(central, name_len);
    put16(central, 0);  // extra
    put16(central, 0);  // comment
    put16(central, 0);  // disk
    put16(central, 0);  // internal attrs
    put32(central, 0);  // external attrs
    put32(central, offset);
    central += e.name;
  }
  if (out.size() + central.size() >= limit) throw Error(ErrorCode::InvalidArgument, "zip: archive too large");
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

}  // namespace skeyspot
