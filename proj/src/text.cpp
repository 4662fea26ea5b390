// SPDX-License-Identifier: Apache-2.0
#include "minibert/text.hpp"

#include "minibert/error.hpp"

namespace minibert {

bool utf8_next(std::string_view s, size_t& i, uint32_t& cp) {
  if (i >= s.size()) return false;
  const auto byte = [&](size_t k) { return static_cast<unsigned char>(s[k]); };
  unsigned char b0 = byte(i);
  size_t len;
  uint32_t v;
  if (b0 < 0x80) {
    cp = b0;
    ++i;
    return true;
  } else if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    v = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    v = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    v = b0 & 0x07;
  } else {
    return false;
  }
  if (i + len > s.size()) return false;
  for (size_t k = 1; k < len; ++k) {
    unsigned char b = byte(i + k);
    if ((b & 0xC0) != 0x80) return false;
    v = (v << 6) | (b & 0x3F);
  }
  // Reject overlong forms and surrogate/range violations.
  if ((len == 2 && v < 0x80) || (len == 3 && v < 0x800) || (len == 4 && v < 0x10000)) return false;
  if (v > 0x10FFFF || (v >= 0xD800 && v <= 0xDFFF)) return false;
  cp = v;
  i += len;
  return true;
}

void utf8_validate(std::string_view s, size_t base_offset) {
  size_t i = 0;
  uint32_t cp;
  while (i < s.size()) {
    size_t before = i;
    if (!utf8_next(s, i, cp)) {
      fail_data("invalid UTF-8 at byte offset " + std::to_string(base_offset + before));
    }
  }
}

void utf8_append(std::string& out, uint32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

uint32_t lower_codepoint(uint32_t cp) {
  if (cp >= 'A' && cp <= 'Z') return cp + 0x20;
  // Latin-1 Supplement uppercase rows (multiplication sign excluded).
  if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 0x20;
  // Latin Extended-A comes in upper/lower pairs.
  if (cp >= 0x100 && cp <= 0x137 && cp % 2 == 0) return cp + 1;
  if (cp >= 0x139 && cp <= 0x148 && cp % 2 == 1) return cp + 1;
  if (cp >= 0x14A && cp <= 0x177 && cp % 2 == 0) return cp + 1;
  if (cp == 0x178) return 0xFF;
  if (cp == 0x179 || cp == 0x17B || cp == 0x17D) return cp + 1;
  return cp;
}

bool is_upper_codepoint(uint32_t cp) { return lower_codepoint(cp) != cp; }

uint32_t strip_mark_codepoint(uint32_t cp) {
  if (cp >= 0x300 && cp <= 0x36F) return 0;  // combining marks
  if (cp < 0xC0) return cp;
  switch (cp) {
    case 0xE0: case 0xE1: case 0xE2: case 0xE3: case 0xE4: case 0xE5: return 'a';
    case 0xE7: return 'c';
    case 0xE8: case 0xE9: case 0xEA: case 0xEB: return 'e';
    case 0xEC: case 0xED: case 0xEE: case 0xEF: return 'i';
    case 0xF1: return 'n';
    case 0xF2: case 0xF3: case 0xF4: case 0xF5: case 0xF6: return 'o';
    case 0xF9: case 0xFA: case 0xFB: case 0xFC: return 'u';
    case 0xFD: case 0xFF: return 'y';
  }
  if (cp >= 0x101 && cp <= 0x105 && cp % 2 == 1) return 'a';
  if (cp >= 0x107 && cp <= 0x10D && cp % 2 == 1) return 'c';
  if (cp == 0x10F || cp == 0x111) return 'd';
  if (cp >= 0x113 && cp <= 0x11B && cp % 2 == 1) return 'e';
  if (cp >= 0x11D && cp <= 0x123 && cp % 2 == 1) return 'g';
  if (cp == 0x125 || cp == 0x127) return 'h';
  if ((cp >= 0x129 && cp <= 0x12F && cp % 2 == 1) || cp == 0x131) return 'i';
  if (cp == 0x135) return 'j';
  if (cp == 0x137) return 'k';
  if (cp == 0x13A || cp == 0x13C || cp == 0x13E || cp == 0x140 || cp == 0x142) return 'l';
  if (cp == 0x144 || cp == 0x146 || cp == 0x148) return 'n';
  if (cp >= 0x14D && cp <= 0x151 && cp % 2 == 1) return 'o';
  if (cp == 0x155 || cp == 0x157 || cp == 0x159) return 'r';
  if (cp >= 0x15B && cp <= 0x161 && cp % 2 == 1) return 's';
  if (cp == 0x163 || cp == 0x165 || cp == 0x167) return 't';
  if (cp >= 0x169 && cp <= 0x173 && cp % 2 == 1) return 'u';
  if (cp == 0x175) return 'w';
  if (cp == 0x177) return 'y';
  if (cp == 0x17A || cp == 0x17C || cp == 0x17E) return 'z';
  return cp;
}

bool is_space_codepoint(uint32_t cp) {
  return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\v' || cp == '\f' ||
         cp == 0xA0;
}

bool is_punct_codepoint(uint32_t cp) {
  if ((cp >= 33 && cp <= 47) || (cp >= 58 && cp <= 64) || (cp >= 91 && cp <= 96) ||
      (cp >= 123 && cp <= 126)) {
    return true;
  }
  switch (cp) {
    case 0xAB: case 0xBB:                          // guillemets
    case 0x2013: case 0x2014:                      // dashes
    case 0x2018: case 0x2019: case 0x201A:         // single quotes
    case 0x201C: case 0x201D: case 0x201E:         // double quotes
    case 0x2026:                                   // ellipsis
      return true;
  }
  return false;
}

bool is_digit_codepoint(uint32_t cp) { return cp >= '0' && cp <= '9'; }

std::string normalize(std::string_view text, Casing casing) {
  std::string out;
  out.reserve(text.size());
  size_t i = 0;
  uint32_t cp;
  bool pending_space = false;
  bool seen_any = false;
  while (i < text.size()) {
    size_t before = i;
    if (!utf8_next(text, i, cp)) {
      fail_data("invalid UTF-8 at byte offset " + std::to_string(before));
    }
    if (is_space_codepoint(cp)) {
      pending_space = seen_any;
      continue;
    }
    if (casing == Casing::Uncased) {
      cp = strip_mark_codepoint(lower_codepoint(cp));
      if (cp == 0) continue;  // bare combining mark
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    utf8_append(out, cp);
    seen_any = true;
  }
  return out;
}

std::vector<std::string_view> split_words(std::string_view text) {
  std::vector<std::string_view> words;
  size_t start = 0;
  for (size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == ' ') {
      if (i > start) words.push_back(text.substr(start, i - start));
      start = i + 1;
    }
  }
  return words;
}

std::vector<std::string> split_punctuation(std::string_view word) {
  std::vector<std::string> units;
  std::string current;
  size_t i = 0;
  uint32_t cp;
  while (i < word.size()) {
    if (!utf8_next(word, i, cp)) fail_data("invalid UTF-8 in word");
    if (is_punct_codepoint(cp)) {
      if (!current.empty()) {
        units.push_back(std::move(current));
        current.clear();
      }
      std::string p;
      utf8_append(p, cp);
      units.push_back(std::move(p));
    } else {
      utf8_append(current, cp);
    }
  }
  if (!current.empty()) units.push_back(std::move(current));
  return units;
}

size_t codepoint_count(std::string_view s) {
  size_t i = 0, n = 0;
  uint32_t cp;
  while (i < s.size()) {
    if (!utf8_next(s, i, cp)) fail_data("invalid UTF-8 in string");
    ++n;
  }
  return n;
}

}  // namespace minibert
