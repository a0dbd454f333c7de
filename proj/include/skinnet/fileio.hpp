#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace skinnet {

/// Writes to `<path>.tmp` then renames over `path`; throws kIo on failure.
void write_file_atomic(const std::filesystem::path& path, std::span<const char> bytes);
inline void write_text_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::span<const char>(text.data(), text.size()));
}

std::string read_file(const std::filesystem::path& path);

}  // namespace skinnet
