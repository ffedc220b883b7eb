#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace edgeprompt {

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

std::string sha256_hex(std::string_view bytes);

}  // namespace edgeprompt
