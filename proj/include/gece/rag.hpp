#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gece/longtail.hpp"
#include "gece/prompt.hpp"
#include "gece/providers.hpp"

namespace gece {

enum class TaskType { kOpenQa, kMultipleChoice };

std::string to_string(TaskType t);

struct Query {
  std::string instance_id;
  std::string question;
  Route route = Route::kCommon;
  TaskType task_type = TaskType::kOpenQa;
};

struct GenerationResult {
  std::string instance_id;
  std::string text;
  std::vector<double> token_probs;
  double latency_ms = 0.0;
  Route route_taken = Route::kCommon;
  std::size_t retrieval_count = 0;
  std::size_t k = 0;
  bool retrieval_shortfall = false;
  std::string error;  // empty on success

  bool ok() const { return error.empty(); }
};

json to_json(const GenerationResult& r);
GenerationResult generation_result_from_json(const json& j);

struct AnswerOptions {
  std::size_t k = 10;
  std::size_t doc_budget = kDefaultDocTokenBudget;
  PromptTemplate prompt_template;
  GenerationRequest request_template;  // temperature 0.6, top_p 0.9
};

/// Retrieval result with the shortfall warning surfaced.
RetrievalResult retrieve(Retriever& retriever, const std::string& question, std::size_t k);

/// Long-tail queries: retrieve k docs, assemble, generate. Common queries:
/// generate on the bare question; the retriever is never called. Latency is
/// the sum of provider-reported call latencies. Failures come back as an
/// error result that keeps the instance_id.
GenerationResult answer(const Query& query, Generator& generator, Retriever& retriever,
                        const AnswerOptions& options = {});

struct BatchConfig {
  AnswerOptions answer;
  std::size_t parallelism = 8;
};

struct BatchTiming {
  double common_ms = 0.0;
  double long_tail_ms = 0.0;
  double wall_ms = 0.0;
  std::size_t common_count = 0;
  std::size_t long_tail_count = 0;
  std::size_t failures = 0;

  double total_ms() const { return common_ms + long_tail_ms; }
};

struct BatchResult {
  std::vector<GenerationResult> results;  // input order
  BatchTiming timing;
};

BatchResult run_batch(std::span<const Query> queries, Generator& generator, Retriever& retriever,
                      const BatchConfig& config = {});

}  // namespace gece
