#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace nmpo {

std::string read_text_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path,
                       std::string_view content);

/// Relative file name -> content.
using FileSet = std::map<std::string, std::string>;

/// Materializes `files` into a temporary sibling directory and renames it to
/// `dir`. An existing `dir` is replaced only when `force` is set.
void write_directory_atomic(const std::filesystem::path& dir,
                            const FileSet& files, bool force);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

/// Parses a whole token as a finite double.
bool parse_double(std::string_view text, double& out);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace nmpo
