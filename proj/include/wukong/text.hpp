#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace wukong::text {

/// Decodes UTF-8 into scalar values. Invalid bytes decode to U+FFFD one
/// byte at a time so that every input has a defined length.
std::u32string decode_utf8(std::string_view s);
std::string encode_utf8(std::u32string_view s);

bool is_ascii_punct(char32_t c) noexcept;
bool is_space(char32_t c) noexcept;

/// Word tokens: maximal runs that are neither whitespace nor ASCII
/// punctuation. "Why?" is one token.
std::vector<std::string> word_tokens(std::string_view s);

/// Prompt-size estimate: every word run counts one, every punctuation
/// character counts one.
std::size_t estimate_tokens(std::string_view s);

/// Fraction of scalar values (ignoring whitespace) that are ASCII. Empty
/// input yields 1.
double ascii_ratio(std::string_view s);

std::string trim(std::string_view s);
std::string collapse_whitespace(std::string_view s);
std::string to_lower_ascii(std::string_view s);

}  // namespace wukong::text
