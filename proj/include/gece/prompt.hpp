#pragma once

#include <span>
#include <string>
#include <vector>

#include "gece/providers.hpp"

namespace gece {

/// Versioned prompt layout: documents block, then question, then answer cue.
struct PromptTemplate {
  std::string version = "v1";
  std::string question_prefix = "Question: ";
  std::string answer_cue = "\nAnswer:";
};

inline constexpr std::size_t kDefaultDocTokenBudget = 512;

struct PromptAssembly {
  std::string prompt_text;
  std::size_t doc_token_count = 0;
  std::vector<std::string> included_doc_ids;
  /// Token count kept from each included doc, parallel to included_doc_ids.
  std::vector<std::size_t> included_doc_tokens;
  bool truncated = false;
};

/// Appends docs in rank order until the shared document budget is spent.
/// The doc that would overflow is cut at a token boundary and every later doc
/// is dropped. The question is always kept in full. Tokens are counted with
/// gece::tokenize; a truncated doc is re-joined from its kept tokens.
PromptAssembly assemble_prompt(const std::string& question, std::span<const RetrievedDoc> docs,
                               std::size_t budget = kDefaultDocTokenBudget,
                               const PromptTemplate& tmpl = {});

}  // namespace gece
