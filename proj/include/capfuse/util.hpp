#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace capfuse {

std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t splitmix64(std::uint64_t x);

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary sibling and renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::vector<std::string_view> split(std::string_view s, char sep);
std::string_view trim(std::string_view s);
/// Collapses whitespace runs to one space and trims the ends.
std::string normalize_whitespace(std::string_view s);

/// printf-style "%.*g".
std::string format_significant(double value, int digits);
/// printf-style "%.*f".
std::string format_fixed(double value, int decimals);

/// RFC 4180 quoting, applied only when the field needs it.
std::string csv_escape(std::string_view field);
/// Splits one CSV record; understands double-quoted fields.
std::vector<std::string> csv_split(std::string_view line);

/// Current UTC time as "YYYY-MM-DDTHH:MM:SSZ".
std::string utc_timestamp();

}  // namespace capfuse
