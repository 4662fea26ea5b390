// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace minibert {

enum class Casing { Cased, Uncased };

// Decodes the codepoint starting at s[i]; advances i past it.
// Returns false on malformed UTF-8 (i is left at the offending byte).
bool utf8_next(std::string_view s, size_t& i, uint32_t& cp);

// Throws a data error with the byte offset of the first invalid sequence.
void utf8_validate(std::string_view s, size_t base_offset = 0);

void utf8_append(std::string& out, uint32_t cp);

// Case mapping for ASCII, Latin-1 Supplement and Latin Extended-A.
uint32_t lower_codepoint(uint32_t cp);
bool is_upper_codepoint(uint32_t cp);

// Diacritic removal for lowercase Latin letters (NFD-decompose, drop marks).
// Combining marks U+0300..U+036F map to 0 (drop). Unknown codepoints pass through.
uint32_t strip_mark_codepoint(uint32_t cp);

bool is_space_codepoint(uint32_t cp);
bool is_punct_codepoint(uint32_t cp);
bool is_digit_codepoint(uint32_t cp);

// Collapses whitespace runs to single spaces and trims the ends.
// Uncased additionally lowercases and strips diacritics.
std::string normalize(std::string_view text, Casing casing);

// Splits normalized text on spaces.
std::vector<std::string_view> split_words(std::string_view text);

// Splits one word into wordpiece matching units: punctuation characters
// become standalone units, letter/digit runs stay together.
std::vector<std::string> split_punctuation(std::string_view word);

size_t codepoint_count(std::string_view s);

}  // namespace minibert
