#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "gece/calibration.hpp"
#include "gece/metrics.hpp"

namespace gece {

using json = nlohmann::json;

/// Failure talking to an external provider. `retryable` marks transport
/// failures and 5xx/429 responses.
class ProviderError : public std::runtime_error {
 public:
  ProviderError(const std::string& what, bool retryable)
      : std::runtime_error(what), retryable_(retryable) {}
  bool retryable() const { return retryable_; }

 private:
  bool retryable_;
};

// ---------------------------------------------------------------------------
// Wire types
// ---------------------------------------------------------------------------

struct GenerationRequest {
  std::string prompt;
  double temperature = 0.6;
  double top_p = 0.9;
  int max_tokens = 64;
  bool want_logprobs = true;

  void validate() const;
};

struct GenerationResponse {
  std::string text;
  std::vector<std::string> tokens;
  std::vector<double> token_probs;  // linear, (0, 1]
  std::string model_id;
  /// Wall-clock time spent inside the provider call, as measured when the
  /// response was produced (and preserved through fixture replay).
  double latency_ms = 0.0;
};

struct RetrievedDoc {
  std::string doc_id;
  std::string text;
  double score = 0.0;
  std::size_t rank = 0;  // 1-based
};

struct RetrievalResult {
  std::vector<RetrievedDoc> docs;
  bool shortfall = false;  // fewer than k docs came back
  double latency_ms = 0.0;
};

json to_json(const GenerationRequest& r);
json to_json(const GenerationResponse& r);
GenerationResponse generation_response_from_json(const json& j);
json retrieval_request_json(const std::string& question, std::size_t k);
json to_json(const RetrievalResult& r);
RetrievalResult retrieval_result_from_json(const json& j);

/// Parses a completion endpoint body {text, tokens[], token_logprobs[]} and
/// exponentiates the log-probabilities.
GenerationResponse parse_completion_body(const json& body);

/// Parses {docs: [{id, text, score}]}; rank follows array order.
std::vector<RetrievedDoc> parse_retrieval_body(const json& body);

/// SHA-256 over the request serialized with sorted keys and every
/// floating-point number rendered with 6 decimals. Hex encoded.
std::string canonical_digest(const json& request);

// ---------------------------------------------------------------------------
// Provider interfaces
// ---------------------------------------------------------------------------

class Generator {
 public:
  virtual ~Generator() = default;
  virtual GenerationResponse generate(const GenerationRequest& request) = 0;
};

class Retriever {
 public:
  virtual ~Retriever() = default;
  virtual RetrievalResult retrieve(const std::string& question, std::size_t k) = 0;
};

class GradientSource {
 public:
  virtual ~GradientSource() = default;
  virtual GradientVector mean() = 0;
  virtual GradientVector gradient(const std::string& instance_id, const std::string& input_text,
                                  const std::string& target_text) = 0;
};

// ---------------------------------------------------------------------------
// HTTP clients
// ---------------------------------------------------------------------------

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{250};
  /// Replaced in tests to avoid real sleeps.
  std::function<void(std::chrono::milliseconds)> sleep;
};

struct HttpEndpoint {
  std::string base_url;  // "http://host:port"
  std::string path;      // "/v1/completions"
  std::string auth_token;
  std::chrono::milliseconds timeout{60000};
};

/// Issues one POST (or GET when body is null) and returns the parsed JSON
/// body. Implementations: real HTTP, or test doubles.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual json post(const HttpEndpoint& endpoint, const json& body) = 0;
  virtual json get(const HttpEndpoint& endpoint, const std::string& path_and_query) = 0;
};

std::shared_ptr<Transport> make_http_transport();

/// Runs `fn` under the retry policy; only retryable ProviderErrors are
/// retried, with the backoff doubling after every failure.
json with_retries(const RetryPolicy& policy, const std::function<json()>& fn);

class HttpGenerator : public Generator {
 public:
  HttpGenerator(HttpEndpoint endpoint, std::shared_ptr<Transport> transport, RetryPolicy retry = {});
  GenerationResponse generate(const GenerationRequest& request) override;

 private:
  HttpEndpoint endpoint_;
  std::shared_ptr<Transport> transport_;
  RetryPolicy retry_;
};

class HttpRetriever : public Retriever {
 public:
  HttpRetriever(HttpEndpoint endpoint, std::shared_ptr<Transport> transport, RetryPolicy retry = {});
  RetrievalResult retrieve(const std::string& question, std::size_t k) override;

 private:
  HttpEndpoint endpoint_;
  std::shared_ptr<Transport> transport_;
  RetryPolicy retry_;
};

/// Client for the gradient service: POST /gradient, GET /mean?run_id=.
class HttpGradientSource : public GradientSource {
 public:
  HttpGradientSource(HttpEndpoint endpoint, std::string run_id,
                     std::shared_ptr<Transport> transport, RetryPolicy retry = {});
  GradientVector mean() override;
  GradientVector gradient(const std::string& instance_id, const std::string& input_text,
                          const std::string& target_text) override;

 private:
  HttpEndpoint endpoint_;
  std::string run_id_;
  std::shared_ptr<Transport> transport_;
  RetryPolicy retry_;
};

// ---------------------------------------------------------------------------
// Record / replay
// ---------------------------------------------------------------------------

enum class FixtureMode { kRecord, kReplay, kPassthrough };

FixtureMode parse_fixture_mode(const std::string& s);
std::string to_string(FixtureMode m);

class FixtureMiss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Digest-keyed store of provider responses backed by a JSONL file of
/// {digest, request, response} lines. Recording appends to the file.
class FixtureStore {
 public:
  FixtureStore(std::string path, FixtureMode mode);

  FixtureMode mode() const { return mode_; }
  const std::string& path() const { return path_; }
  std::size_t size() const;

  std::optional<json> lookup(const std::string& digest) const;
  void record(const std::string& digest, const json& request, const json& response);

 private:
  std::string path_;
  FixtureMode mode_;
  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, json> entries_;
};

class FixtureGenerator : public Generator {
 public:
  FixtureGenerator(std::shared_ptr<FixtureStore> store, std::shared_ptr<Generator> live);
  GenerationResponse generate(const GenerationRequest& request) override;

 private:
  std::shared_ptr<FixtureStore> store_;
  std::shared_ptr<Generator> live_;
};

class FixtureRetriever : public Retriever {
 public:
  FixtureRetriever(std::shared_ptr<FixtureStore> store, std::shared_ptr<Retriever> live);
  RetrievalResult retrieve(const std::string& question, std::size_t k) override;

 private:
  std::shared_ptr<FixtureStore> store_;
  std::shared_ptr<Retriever> live_;
};

// ---------------------------------------------------------------------------
// Call log
// ---------------------------------------------------------------------------

struct RetrievalCall {
  std::string question;
  std::size_t k = 0;
};

/// Append-only, internally synchronized log of retrieval calls.
class CallLog {
 public:
  void append(RetrievalCall call);
  std::vector<RetrievalCall> snapshot() const;
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::vector<RetrievalCall> calls_;
};

class LoggingRetriever : public Retriever {
 public:
  LoggingRetriever(std::shared_ptr<Retriever> inner, std::shared_ptr<CallLog> log);
  RetrievalResult retrieve(const std::string& question, std::size_t k) override;

 private:
  std::shared_ptr<Retriever> inner_;
  std::shared_ptr<CallLog> log_;
};

// ---------------------------------------------------------------------------
// Simulated providers
// ---------------------------------------------------------------------------

/// Opening line of the documents block in augmented prompts.
inline constexpr std::string_view kPromptDocumentsMarker = "Documents:\n";

struct SimulatedLatency {
  double generation_ms_per_token = 1.0;  // per prompt token
  double retrieval_ms = 400.0;           // per retrieval call
};

/// Deterministic offline generator. The answer depends only on the prompt
/// and seed; it sleeps generation_ms_per_token for every prompt token.
///
/// Answers come from `answer_book` (keyed by question text, matched as a
/// substring of the prompt) when the prompt carries a documents block, or
/// when the question is listed in `known_without_docs`. Otherwise the reply
/// is a fixed "unknown" string.
class SimulatedGenerator : public Generator {
 public:
  SimulatedGenerator(SimulatedLatency latency, std::uint64_t seed,
                     std::map<std::string, std::string> answer_book = {},
                     std::set<std::string> known_without_docs = {});
  GenerationResponse generate(const GenerationRequest& request) override;

 private:
  SimulatedLatency latency_;
  std::uint64_t seed_;
  std::map<std::string, std::string> answer_book_;
  std::set<std::string> known_without_docs_;
};

/// Serves documents from an in-memory corpus keyed by question; questions
/// not in the corpus get `synthetic_docs` generated documents of
/// `synthetic_doc_tokens` tokens each. Sleeps retrieval_ms per call.
class SimulatedRetriever : public Retriever {
 public:
  SimulatedRetriever(SimulatedLatency latency,
                     std::map<std::string, std::vector<RetrievedDoc>> corpus = {},
                     std::size_t synthetic_docs = 20, std::size_t synthetic_doc_tokens = 50);
  RetrievalResult retrieve(const std::string& question, std::size_t k) override;

 private:
  SimulatedLatency latency_;
  std::map<std::string, std::vector<RetrievedDoc>> corpus_;
  std::size_t synthetic_docs_;
  std::size_t synthetic_doc_tokens_;
};

class StaticGradientSource : public GradientSource {
 public:
  StaticGradientSource(GradientVector mean, std::map<std::string, GradientVector> per_instance);
  GradientVector mean() override { return mean_; }
  GradientVector gradient(const std::string& instance_id, const std::string& input_text,
                          const std::string& target_text) override;

 private:
  GradientVector mean_;
  std::map<std::string, GradientVector> per_instance_;
};

// ---------------------------------------------------------------------------
// File loaders
// ---------------------------------------------------------------------------

class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// "token<TAB>relative_frequency" per line. Blank lines and lines starting
/// with '#' are skipped.
WordFrequencyTable load_word_frequency_table(const std::string& path,
                                             double floor_frequency = 1e-8);
WordFrequencyTable parse_word_frequency_table(std::istream& in, const std::string& corpus_name,
                                              double floor_frequency = 1e-8);

struct GradientFile {
  GradientVector mean;
  std::map<std::string, GradientVector> per_instance;
};

/// JSONL: first line {"mean": [...]}, then {"instance_id": ..., "grad": [...]}.
GradientFile load_gradients(const std::string& path);
GradientFile parse_gradients(std::istream& in);

}  // namespace gece
