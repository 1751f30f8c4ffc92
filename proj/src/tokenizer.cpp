#include "medrank/tokenizer.hpp"

namespace medrank {

namespace {

bool is_token_char(unsigned char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') ||
         (c >= 'A' && c <= 'Z') || c >= 0x80;
}

char lower(unsigned char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a')
                                : static_cast<char>(c);
}

}  // namespace

std::vector<TokenSpan> tokenize_with_offsets(std::string_view text) {
  std::vector<TokenSpan> spans;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && !is_token_char(text[i])) ++i;
    if (i == text.size()) break;
    TokenSpan span;
    span.begin = i;
    while (i < text.size() && is_token_char(text[i])) {
      span.token.push_back(lower(text[i]));
      ++i;
    }
    span.end = i;
    spans.push_back(std::move(span));
  }
  return spans;
}

TokenSequence tokenize(std::string_view text) {
  TokenSequence tokens;
  for (auto& span : tokenize_with_offsets(text)) {
    tokens.push_back(std::move(span.token));
  }
  return tokens;
}

std::string join_tokens(const TokenSequence& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

}  // namespace medrank
