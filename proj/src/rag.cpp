#include "gece/rag.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

#include "gece/tokenize.hpp"

namespace gece {

std::string to_string(TaskType t) {
  return t == TaskType::kMultipleChoice ? "multiple_choice" : "open_qa";
}

PromptAssembly assemble_prompt(const std::string& question, std::span<const RetrievedDoc> docs,
                               std::size_t budget, const PromptTemplate& tmpl) {
  PromptAssembly out;
  std::string block;
  std::size_t remaining = budget;
  for (const auto& doc : docs) {
    if (remaining == 0) break;
    const TokenSequence toks = tokenize(doc.text);
    std::string text;
    std::size_t kept = toks.size();
    if (kept > remaining) {
      kept = remaining;
      text = join_tokens(std::vector<std::string>(
          toks.tokens.begin(), toks.tokens.begin() + static_cast<std::ptrdiff_t>(kept)));
      out.truncated = true;
    } else {
      text = doc.text;
    }
    block += "[" + std::to_string(out.included_doc_ids.size() + 1) + "] " + text + "\n";
    out.included_doc_ids.push_back(doc.doc_id);
    out.included_doc_tokens.push_back(kept);
    out.doc_token_count += kept;
    remaining -= kept;
    if (out.truncated) break;
  }
  if (!out.included_doc_ids.empty()) {
    out.prompt_text = std::string(kPromptDocumentsMarker) + block + "\n";
  }
  out.prompt_text += tmpl.question_prefix + question + tmpl.answer_cue;
  return out;
}

json to_json(const GenerationResult& r) {
  json j{{"instance_id", r.instance_id},
         {"route", to_string(r.route_taken)},
         {"text", r.text},
         {"token_probs", r.token_probs},
         {"latency_ms", r.latency_ms},
         {"retrieval_count", r.retrieval_count},
         {"k", r.k}};
  if (r.retrieval_shortfall) j["retrieval_shortfall"] = true;
  if (!r.ok()) j["error"] = r.error;
  return j;
}

GenerationResult generation_result_from_json(const json& j) {
  GenerationResult r;
  r.instance_id = j.at("instance_id").get<std::string>();
  r.route_taken = parse_route(j.at("route").get<std::string>());
  r.text = j.at("text").get<std::string>();
  r.token_probs = j.value("token_probs", std::vector<double>{});
  r.latency_ms = j.at("latency_ms").get<double>();
  r.retrieval_count = j.at("retrieval_count").get<std::size_t>();
  r.k = j.value("k", std::size_t{0});
  r.retrieval_shortfall = j.value("retrieval_shortfall", false);
  r.error = j.value("error", "");
  return r;
}

RetrievalResult retrieve(Retriever& retriever, const std::string& question, std::size_t k) {
  if (k == 0) return {};
  RetrievalResult r = retriever.retrieve(question, k);
  if (r.docs.size() > k) r.docs.resize(k);
  for (std::size_t i = 1; i < r.docs.size(); ++i) {
    if (r.docs[i].rank <= r.docs[i - 1].rank) {
      throw ProviderError("retriever returned docs out of rank order", false);
    }
  }
  r.shortfall = r.docs.size() < k;
  return r;
}

GenerationResult answer(const Query& query, Generator& generator, Retriever& retriever,
                        const AnswerOptions& options) {
  GenerationResult out;
  out.instance_id = query.instance_id;
  out.route_taken = query.route;
  try {
    if (query.question.empty()) throw std::invalid_argument("empty question");
    GenerationRequest req = options.request_template;
    double latency = 0.0;
    if (query.route == Route::kLongTail) {
      out.k = options.k;
      const RetrievalResult docs = retrieve(retriever, query.question, options.k);
      latency += docs.latency_ms;
      out.retrieval_shortfall = docs.shortfall;
      const PromptAssembly p =
          assemble_prompt(query.question, docs.docs, options.doc_budget, options.prompt_template);
      out.retrieval_count = p.included_doc_ids.size();
      req.prompt = p.prompt_text;
    } else {
      req.prompt = assemble_prompt(query.question, {}, 0, options.prompt_template).prompt_text;
    }
    const GenerationResponse resp = generator.generate(req);
    latency += resp.latency_ms;
    out.text = resp.text;
    out.token_probs = resp.token_probs;
    out.latency_ms = latency;
  } catch (const std::exception& e) {
    out.error = e.what();
    out.text.clear();
    out.token_probs.clear();
  }
  return out;
}

BatchResult run_batch(std::span<const Query> queries, Generator& generator, Retriever& retriever,
                      const BatchConfig& config) {
  BatchResult out;
  if (queries.empty()) return out;
  out.results.resize(queries.size());

  const auto start = std::chrono::steady_clock::now();
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < queries.size(); i = next++) {
      out.results[i] = answer(queries[i], generator, retriever, config.answer);
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(config.parallelism, 1, queries.size());
  {
    std::vector<std::jthread> pool;
    pool.reserve(n_threads - 1);
    for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
  }
  out.timing.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

  for (const auto& r : out.results) {
    if (!r.ok()) ++out.timing.failures;
    if (r.route_taken == Route::kLongTail) {
      out.timing.long_tail_ms += r.latency_ms;
      ++out.timing.long_tail_count;
    } else {
      out.timing.common_ms += r.latency_ms;
      ++out.timing.common_count;
    }
  }
  return out;
}

}  // namespace gece
