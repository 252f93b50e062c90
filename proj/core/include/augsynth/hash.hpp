#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace augsynth {

/// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);
std::string sha256_hex(std::span<const float> values);

/// FNV-1a over raw float bits; a cheap checksum for weight-equality tests.
std::uint64_t checksum(std::span<const float> values) noexcept;

}  // namespace augsynth
