#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace ghc {

/// Writes `bytes` to a sibling temp file and renames it over `path`, so
/// readers never observe a partially written file.
void atomic_write(const std::filesystem::path& path, std::string_view bytes);

std::string read_file(const std::filesystem::path& path);

/// Cache directory from GHCASCADE_CACHE_DIR, else a folder under the system temp dir.
std::filesystem::path cache_dir();

}  // namespace ghc
