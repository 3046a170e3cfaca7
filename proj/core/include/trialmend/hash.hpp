#pragma once

#include <string>
#include <string_view>

namespace trialmend {

/// SHA-256 of `bytes`, rendered as 64 lowercase hex characters.
std::string sha256_hex(std::string_view bytes);

/// Short content id used where a full digest would be noise: the first
/// 16 hex characters of sha256_hex.
std::string short_digest(std::string_view bytes);

}  // namespace trialmend
