// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <ostream>
#include <string>

namespace procrnn {

/// Writes through a temporary sibling file and renames it over `path` only
/// after `writer` returns and the stream flushed cleanly. On any failure the
/// temporary is removed and `path` is left untouched.
void write_file_atomically(const std::filesystem::path& path,
                           const std::function<void(std::ostream&)>& writer);

/// Whole file as bytes; throws std::runtime_error when unreadable.
std::string read_file(const std::filesystem::path& path);

}  // namespace procrnn
