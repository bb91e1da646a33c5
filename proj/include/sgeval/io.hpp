#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace sg {

/// Whole file as bytes; transparently inflates files ending in `.gz`.
/// Throws sg::Error with the path on failure.
std::string read_file(const std::filesystem::path& path);

/// Writes (truncating) `content`; creates parent directories.
void write_file(const std::filesystem::path& path, std::string_view content);

/// Splits on '\n', dropping one trailing empty line and any '\r' before '\n'.
std::vector<std::string> split_lines(std::string_view text);

/// Splits on runs of ASCII whitespace.
std::vector<std::string> split_whitespace(std::string_view text);

}  // namespace sg
