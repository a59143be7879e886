#ifndef KEYDESC_UNICODE_HPP
#define KEYDESC_UNICODE_HPP

// Thin ICU wrappers: NFKC case folding, code point iteration and
// character classes used by the tokenizer and the span extractor.

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "keydesc/errors.hpp"

namespace keydesc::unicode {

struct CodePoint {
  char32_t value;
  std::size_t begin;  // byte offset
  std::size_t end;    // byte offset, exclusive
};

/// Decodes UTF-8; ill-formed sequences decode to U+FFFD.
inline std::vector<CodePoint> decode(std::string_view text) {
  std::vector<CodePoint> out;
  out.reserve(text.size());
  const auto* s = reinterpret_cast<const uint8_t*>(text.data());
  const auto length = static_cast<int32_t>(text.size());
  int32_t i = 0;
  while (i < length) {
    const int32_t start = i;
    UChar32 c;
    U8_NEXT(s, i, length, c);
    if (c < 0) c = 0xFFFD;
    out.push_back({static_cast<char32_t>(c), static_cast<std::size_t>(start),
                   static_cast<std::size_t>(i)});
  }
  return out;
}

inline void append_utf8(std::string& out, char32_t c) {
  icu::UnicodeString(static_cast<UChar32>(c)).toUTF8String(out);
}

inline bool is_space(char32_t c) { return u_isUWhiteSpace(static_cast<UChar32>(c)); }

/// Punctuation or symbol; each such code point is a standalone token.
inline bool is_punct(char32_t c) {
  const auto mask = U_GET_GC_MASK(static_cast<UChar32>(c));
  return (mask & (U_GC_P_MASK | U_GC_S_MASK)) != 0;
}

inline bool is_upper(char32_t c) {
  return u_isupper(static_cast<UChar32>(c)) || u_istitle(static_cast<UChar32>(c));
}

inline bool is_lower(char32_t c) { return u_islower(static_cast<UChar32>(c)); }

inline bool is_digit(char32_t c) { return u_isdigit(static_cast<UChar32>(c)); }

inline bool is_alpha(char32_t c) { return u_isalpha(static_cast<UChar32>(c)); }

/// NFKC normalization followed by full case folding (ICU "nfkc_cf").
/// Idempotent, unlike NFKC followed by a separate lowercasing step.
inline std::string nfkc_casefold(std::string_view text) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* norm = icu::Normalizer2::getNFKCCasefoldInstance(status);
  if (U_FAILURE(status)) throw Error(std::string("ICU nfkc_cf unavailable: ") + u_errorName(status));
  const auto source = icu::UnicodeString::fromUTF8(
      icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  icu::UnicodeString result = norm->normalize(source, status);
  if (U_FAILURE(status)) throw Error(std::string("NFKC normalization failed: ") + u_errorName(status));
  std::string out;
  result.toUTF8String(out);
  return out;
}

inline std::string nfkc(std::string_view text) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* norm = icu::Normalizer2::getNFKCInstance(status);
  if (U_FAILURE(status)) throw Error(std::string("ICU nfkc unavailable: ") + u_errorName(status));
  const auto source = icu::UnicodeString::fromUTF8(
      icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  icu::UnicodeString result = norm->normalize(source, status);
  if (U_FAILURE(status)) throw Error(std::string("NFKC normalization failed: ") + u_errorName(status));
  std::string out;
  result.toUTF8String(out);
  return out;
}

inline std::string to_lower(std::string_view text) {
  auto s = icu::UnicodeString::fromUTF8(
      icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  s.toLower();
  std::string out;
  s.toUTF8String(out);
  return out;
}

/// Number of code points in the first `bytes` bytes of `text`.
inline std::size_t byte_to_char_offset(std::string_view text, std::size_t bytes) {
  std::size_t chars = 0;
  for (const auto& cp : decode(text)) {
    if (cp.begin >= bytes) break;
    ++chars;
  }
  return chars;
}

/// Byte offset of the `chars`-th code point; clamps to text.size().
inline std::size_t char_to_byte_offset(std::string_view text, std::size_t chars) {
  std::size_t n = 0;
  for (const auto& cp : decode(text)) {
    if (n == chars) return cp.begin;
    ++n;
  }
  return text.size();
}

}  // namespace keydesc::unicode

#endif  // KEYDESC_UNICODE_HPP
