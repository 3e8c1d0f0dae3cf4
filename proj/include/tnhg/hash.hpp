#pragma once

#include <string>
#include <string_view>

namespace tnhg {

/// Lowercase hex SHA-256 digest of `bytes`.
std::string sha256_hex(std::string_view bytes);

/// SHA-256 of a file's contents. Throws std::runtime_error if unreadable.
std::string sha256_file(const std::string& path);

}  // namespace tnhg
