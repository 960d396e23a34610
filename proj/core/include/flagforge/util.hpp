#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace flagforge {

using Json = nlohmann::json;

/// Lowercase hex MD5 of a byte buffer.
std::string md5_hex(std::string_view bytes);
std::string md5_file_hex(const std::filesystem::path& file);

std::string read_file(const std::filesystem::path& file);

/// Writes to a sibling temp file, fsyncs, then renames over `file`.
void write_file_atomic(const std::filesystem::path& file, std::string_view contents);

Json read_json(const std::filesystem::path& file);
void write_json_atomic(const std::filesystem::path& file, const Json& value);

/// Seconds since the Unix epoch, as stored in meta files.
std::int64_t unix_now();

/// Shortest decimal text that round-trips the double.
std::string format_double(double value);

}  // namespace flagforge
