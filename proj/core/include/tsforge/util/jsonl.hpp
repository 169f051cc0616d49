#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace tsforge {

using json = nlohmann::json;

/// Reads a line-delimited JSON file. Blank lines are skipped; a malformed line
/// raises std::runtime_error naming the file and line number.
std::vector<json> read_jsonl(const std::filesystem::path& path);

/// Serializes records one per line (compact form, trailing newline).
std::string to_jsonl(const std::vector<json>& records);

/// Writes `contents` to a sibling temp file and renames it over `path`, so
/// readers never observe a partially written file.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

inline void write_jsonl_atomic(const std::filesystem::path& path, const std::vector<json>& records) {
  write_file_atomic(path, to_jsonl(records));
}

std::string read_file(const std::filesystem::path& path);

/// Rounds to 6 decimal digits for persistence.
double round6(double x);

}  // namespace tsforge
