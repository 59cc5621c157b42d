#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace asktmk::text {

std::string_view trim(std::string_view s) noexcept;
std::string to_lower(std::string_view s);

/// Lowercased ASCII alphanumeric runs. Bytes >= 0x80 count as word
/// characters so UTF-8 words stay intact.
std::vector<std::string> tokenize(std::string_view s);

/// True when `needle`'s tokens occur as a contiguous run inside `haystack`.
bool contains_token_run(const std::vector<std::string>& haystack,
                        const std::vector<std::string>& needle);

/// Text up to and including the first '.', '!' or '?' that ends a word, or
/// up to the first newline, whichever comes first. Trimmed.
std::string first_sentence(std::string_view s);

/// Newlines and tabs become single spaces; used before inlining user text
/// into prompts so it cannot forge a sentinel line.
std::string single_line(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Fixed two-decimal percentage, e.g. 0.6516 -> "65.16%".
std::string percent(double score);

}  // namespace asktmk::text
