#pragma once

#include <string>
#include <string_view>

namespace dualmem::detail {

std::string base64_encode(std::string_view bytes);
/// Throws dualmem::Error on malformed input.
std::string base64_decode(std::string_view text);
/// First 16 hex digits of SHA-256.
std::string short_digest(std::string_view bytes);

}  // namespace dualmem::detail
