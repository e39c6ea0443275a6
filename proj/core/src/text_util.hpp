#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace genreprobe::detail {

std::string_view trim(std::string_view text);

/// Splits on '\n'; a trailing '\r' is stripped from each line.
std::vector<std::string_view> split_lines(std::string_view text);

std::string to_lower(std::string_view text);

/// Count of non-whitespace bytes.
std::size_t non_whitespace_length(std::string_view text);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view content);

}  // namespace genreprobe::detail
