#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace uqac {

/// Lowercase, drop ASCII punctuation, collapse runs of whitespace to one
/// space and trim. Non-ASCII bytes pass through unchanged.
std::string normalize_text(std::string_view raw);

/// Splits on single spaces; input is expected to be normalized.
std::vector<std::string> split_tokens(std::string_view text);

/// 64-bit FNV-1a with a splitmix finalizer; stable across platforms.
std::uint64_t stable_hash(std::string_view bytes, std::uint64_t seed = 0);

/// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

}  // namespace uqac
