#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace tsforge::text {

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);
std::size_t word_count(std::string_view s);
bool starts_with_ci(std::string_view s, std::string_view prefix);
bool contains_ci(std::string_view haystack, std::string_view needle);
std::vector<std::string> split_lines(std::string_view s);
std::vector<std::string> split(std::string_view s, char delim);
std::string join(const std::vector<std::string>& parts, std::string_view delim);

/// Replaces every `{name}` occurrence of each key. Placeholders that are not in
/// `values` are left untouched so callers can detect them.
std::string substitute(std::string_view tmpl,
                       const std::vector<std::pair<std::string, std::string>>& values);

}  // namespace tsforge::text
