#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace skeyspot {

/// Throws Error(IoError).
std::string read_file(const std::filesystem::path& path);
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
void write_file(const std::filesystem::path& path, std::string_view contents);

/// Shortest decimal that round-trips; integral values print without a
/// fractional part ("50", "12.5", "0.1").
std::string format_number(double value);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);

}  // namespace skeyspot
