#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace tsforge {

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/// Lowercase hex SHA-256 of a file's bytes. Throws std::runtime_error if the
/// file cannot be read.
std::string file_sha256(const std::filesystem::path& path);

}  // namespace tsforge
