#pragma once

#include <span>
#include <string>
#include <vector>

namespace skeyspot {

struct ZipEntry {
  std::string name;
  std::string data;
};

/// Uncompressed (stored) zip archive. Entries keep the given order and all
/// carry the DOS epoch timestamp 1980-01-01 00:00, so equal inputs give equal
/// bytes. Throws InvalidArgument for duplicate or empty names and for
/// archives beyond the 32-bit zip limits.
std::string write_zip(std::span<const ZipEntry> entries);

}  // namespace skeyspot
