#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace entfact {

// Lowercase (ASCII), collapse internal whitespace runs to one space, trim.
std::string normalize_surface(std::string_view s);

std::string ascii_lower(std::string_view s);

bool is_word_byte(unsigned char c);

inline bool is_space_byte(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

// True when either string is a case-insensitive substring of the other.
bool has_string_overlap(std::string_view a, std::string_view b);

// Lowercased word and punctuation tokens: runs of word bytes become one
// token, every other non-space byte is its own token.
std::vector<std::string> tokenize(std::string_view text);

std::size_t count_words(std::string_view text);

std::vector<std::string_view> split(std::string_view s, char sep);

std::string_view trim(std::string_view s);

}  // namespace entfact
