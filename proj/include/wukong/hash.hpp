#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace wukong {

using Digest256 = std::array<std::uint8_t, 32>;

Digest256 sha256(std::string_view bytes);
std::string sha256_hex(std::string_view bytes);

/// "sha256:<hex>", the content address used for blobs and cache keys.
std::string content_address(std::string_view bytes);

/// Strips the "sha256:" prefix; throws IntegrityError on anything else.
std::string content_address_hex(std::string_view address);

std::string to_hex(const std::uint8_t* data, std::size_t size);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

}  // namespace wukong
