#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace medrank {

/// Ordered lowercase tokens. Every token is non-empty and whitespace-free.
using TokenSequence = std::vector<std::string>;

/// A token together with its byte range [begin, end) in the source text.
struct TokenSpan {
  std::string token;
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// Lowercases ASCII letters and splits on every maximal run of characters
/// that are not ASCII alphanumerics. Bytes >= 0x80 (UTF-8 continuation and
/// lead bytes) are kept inside tokens so non-ASCII words survive intact.
TokenSequence tokenize(std::string_view text);

/// Same split as tokenize() but keeps source offsets.
std::vector<TokenSpan> tokenize_with_offsets(std::string_view text);

/// Joins tokens with single spaces.
std::string join_tokens(const TokenSequence& tokens);

}  // namespace medrank
