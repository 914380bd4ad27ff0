#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace gece {

/// Lowercased word tokens of a piece of text, together with the text they
/// came from.
///
/// Tokenization rules:
///   - ASCII letters are lowercased; bytes >= 0x80 (UTF-8 sequences) are kept
///     verbatim and treated as word characters.
///   - Whitespace separates tokens and is never part of one.
///   - Every ASCII punctuation character becomes a token of its own, so
///     "footballer, 2014!" -> {"footballer", ",", "2014", "!"}.
///   - Letters, digits and non-ASCII bytes accumulate into words.
struct TokenSequence {
  std::vector<std::string> tokens;
  std::string source_text;

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }
};

TokenSequence tokenize(std::string_view text);

/// Joins tokens with single spaces. tokenize(join_tokens(t)) == t.
std::string join_tokens(const std::vector<std::string>& tokens);

}  // namespace gece
