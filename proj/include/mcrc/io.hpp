#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace mcrc {

std::string read_file(const std::filesystem::path& path);

// Writes through a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace mcrc
