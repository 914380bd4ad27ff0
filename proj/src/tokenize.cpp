#include "gece/tokenize.hpp"

namespace gece {
namespace {

bool is_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_punct(unsigned char c) {
  return c < 0x80 && !is_space(c) && !(c >= '0' && c <= '9') && !(c >= 'a' && c <= 'z') &&
         !(c >= 'A' && c <= 'Z') && c >= 0x20 && c != 0x7f;
}

bool is_control(unsigned char c) { return c < 0x20 || c == 0x7f; }

}  // namespace

TokenSequence tokenize(std::string_view text) {
  TokenSequence out;
  out.source_text = std::string(text);
  std::string word;
  auto flush = [&] {
    if (!word.empty()) {
      out.tokens.push_back(std::move(word));
      word.clear();
    }
  };
  for (unsigned char c : text) {
    if (is_space(c) || is_control(c)) {
      flush();
    } else if (is_punct(c)) {
      flush();
      out.tokens.emplace_back(1, static_cast<char>(c));
    } else if (c >= 'A' && c <= 'Z') {
      word.push_back(static_cast<char>(c - 'A' + 'a'));
    } else {
      word.push_back(static_cast<char>(c));
    }
  }
  flush();
  return out;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

}  // namespace gece
