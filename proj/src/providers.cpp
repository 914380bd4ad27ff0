#include "gece/providers.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <cstdio>
#include <thread>

#include <httplib.h>

#include "gece/tokenize.hpp"

namespace gece {

// ---------------------------------------------------------------------------
// Wire types
// ---------------------------------------------------------------------------

void GenerationRequest::validate() const {
  if (!(temperature >= 0.0)) throw std::invalid_argument("temperature must be >= 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw std::invalid_argument("top_p must lie in (0, 1]");
  if (max_tokens <= 0) throw std::invalid_argument("max_tokens must be positive");
}

json to_json(const GenerationRequest& r) {
  return json{{"prompt", r.prompt},
              {"temperature", r.temperature},
              {"top_p", r.top_p},
              {"max_tokens", r.max_tokens},
              {"logprobs", true}};
}

json to_json(const GenerationResponse& r) {
  return json{{"text", r.text},
              {"tokens", r.tokens},
              {"token_probs", r.token_probs},
              {"model_id", r.model_id},
              {"latency_ms", r.latency_ms}};
}

GenerationResponse generation_response_from_json(const json& j) {
  GenerationResponse r;
  r.text = j.at("text").get<std::string>();
  r.tokens = j.at("tokens").get<std::vector<std::string>>();
  r.token_probs = j.at("token_probs").get<std::vector<double>>();
  r.model_id = j.value("model_id", "");
  r.latency_ms = j.value("latency_ms", 0.0);
  return r;
}

json retrieval_request_json(const std::string& question, std::size_t k) {
  return json{{"query", question}, {"k", k}};
}

json to_json(const RetrievalResult& r) {
  json docs = json::array();
  for (const auto& d : r.docs) {
    docs.push_back({{"id", d.doc_id}, {"text", d.text}, {"score", d.score}, {"rank", d.rank}});
  }
  return json{{"docs", docs}, {"shortfall", r.shortfall}, {"latency_ms", r.latency_ms}};
}

RetrievalResult retrieval_result_from_json(const json& j) {
  RetrievalResult r;
  for (const auto& d : j.at("docs")) {
    r.docs.push_back(RetrievedDoc{d.at("id").get<std::string>(), d.at("text").get<std::string>(),
                                  d.at("score").get<double>(), d.at("rank").get<std::size_t>()});
  }
  r.shortfall = j.value("shortfall", false);
  r.latency_ms = j.value("latency_ms", 0.0);
  return r;
}

namespace {

const json& require_field(const json& obj, const char* field, const char* context) {
  if (!obj.is_object() || !obj.contains(field)) {
    throw ProviderError(std::string("malformed ") + context + ": missing field '" + field + "'",
                        false);
  }
  return obj.at(field);
}

}  // namespace

GenerationResponse parse_completion_body(const json& body) {
  GenerationResponse r;
  const json& text = require_field(body, "text", "completion response");
  if (!text.is_string()) throw ProviderError("malformed completion response: 'text'", false);
  r.text = text.get<std::string>();
  if (!body.contains("token_logprobs") || body.at("token_logprobs").is_null()) {
    throw ProviderError("provider lacks token probabilities", false);
  }
  const json& tokens = require_field(body, "tokens", "completion response");
  const json& logprobs = body.at("token_logprobs");
  if (!tokens.is_array() || !logprobs.is_array() || tokens.size() != logprobs.size()) {
    throw ProviderError("malformed completion response: tokens/token_logprobs length mismatch",
                        false);
  }
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    r.tokens.push_back(tokens[i].get<std::string>());
    const double lp = logprobs[i].get<double>();
    if (!(lp <= 0.0) || !std::isfinite(lp)) {
      throw ProviderError("malformed completion response: logprob out of range", false);
    }
    r.token_probs.push_back(std::exp(lp));
  }
  r.model_id = body.value("model", "");
  return r;
}

std::vector<RetrievedDoc> parse_retrieval_body(const json& body) {
  const json& docs = require_field(body, "docs", "retrieval response");
  if (!docs.is_array()) throw ProviderError("malformed retrieval response: 'docs'", false);
  std::vector<RetrievedDoc> out;
  out.reserve(docs.size());
  std::size_t rank = 1;
  for (const auto& d : docs) {
    RetrievedDoc doc;
    const json& id = require_field(d, "id", "retrieval response doc");
    doc.doc_id = id.is_string() ? id.get<std::string>() : id.dump();
    doc.text = require_field(d, "text", "retrieval response doc").get<std::string>();
    doc.score = require_field(d, "score", "retrieval response doc").get<double>();
    doc.rank = rank++;
    out.push_back(std::move(doc));
  }
  return out;
}

namespace {

json normalize_floats(const json& j) {
  switch (j.type()) {
    case json::value_t::number_float: {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.6f", j.get<double>());
      return std::string(buf);
    }
    case json::value_t::object: {
      json out = json::object();
      for (auto it = j.begin(); it != j.end(); ++it) out[it.key()] = normalize_floats(it.value());
      return out;
    }
    case json::value_t::array: {
      json out = json::array();
      for (const auto& v : j) out.push_back(normalize_floats(v));
      return out;
    }
    default:
      return j;
  }
}

}  // namespace

std::string canonical_digest(const json& request) {
  // nlohmann::json objects are std::map backed, so dump() emits sorted keys.
  const std::string payload = normalize_floats(request).dump();
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(payload.data(), payload.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  hex.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kHex[md[i] >> 4]);
    hex.push_back(kHex[md[i] & 0xf]);
  }
  return hex;
}

// ---------------------------------------------------------------------------
// HTTP
// ---------------------------------------------------------------------------

namespace {

class HttplibTransport : public Transport {
 public:
  json post(const HttpEndpoint& endpoint, const json& body) override {
    auto cli = client(endpoint);
    auto res = cli.Post(endpoint.path, body.dump(), "application/json");
    return handle(res, endpoint.path);
  }

  json get(const HttpEndpoint& endpoint, const std::string& path_and_query) override {
    auto cli = client(endpoint);
    auto res = cli.Get(path_and_query);
    return handle(res, path_and_query);
  }

 private:
  static httplib::Client client(const HttpEndpoint& endpoint) {
    httplib::Client cli(endpoint.base_url);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(endpoint.timeout);
    const auto usecs =
        std::chrono::duration_cast<std::chrono::microseconds>(endpoint.timeout - secs);
    cli.set_connection_timeout(secs.count(), usecs.count());
    cli.set_read_timeout(secs.count(), usecs.count());
    cli.set_write_timeout(secs.count(), usecs.count());
    if (!endpoint.auth_token.empty()) cli.set_bearer_token_auth(endpoint.auth_token);
    return cli;
  }

  static json handle(const httplib::Result& res, const std::string& what) {
    if (!res) {
      throw ProviderError("request to " + what + " failed: " + httplib::to_string(res.error()),
                          true);
    }
    if (res->status >= 500 || res->status == 429) {
      throw ProviderError(what + " returned HTTP " + std::to_string(res->status), true);
    }
    if (res->status < 200 || res->status >= 300) {
      throw ProviderError(what + " returned HTTP " + std::to_string(res->status), false);
    }
    try {
      return json::parse(res->body);
    } catch (const json::parse_error& e) {
      throw ProviderError(what + " returned a malformed body: " + e.what(), false);
    }
  }
};

}  // namespace

std::shared_ptr<Transport> make_http_transport() { return std::make_shared<HttplibTransport>(); }

json with_retries(const RetryPolicy& policy, const std::function<json()>& fn) {
  auto backoff = policy.initial_backoff;
  for (int attempt = 1;; ++attempt) {
    try {
      return fn();
    } catch (const ProviderError& e) {
      if (!e.retryable() || attempt >= policy.attempts) throw;
    }
    if (policy.sleep) {
      policy.sleep(backoff);
    } else {
      std::this_thread::sleep_for(backoff);
    }
    backoff *= 2;
  }
}

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
      .count();
}

}  // namespace

HttpGenerator::HttpGenerator(HttpEndpoint endpoint, std::shared_ptr<Transport> transport,
                             RetryPolicy retry)
    : endpoint_(std::move(endpoint)), transport_(std::move(transport)), retry_(std::move(retry)) {}

GenerationResponse HttpGenerator::generate(const GenerationRequest& request) {
  request.validate();
  const json body = to_json(request);
  const auto start = std::chrono::steady_clock::now();
  const json reply = with_retries(retry_, [&] { return transport_->post(endpoint_, body); });
  GenerationResponse r = parse_completion_body(reply);
  r.latency_ms = elapsed_ms(start);
  return r;
}

HttpRetriever::HttpRetriever(HttpEndpoint endpoint, std::shared_ptr<Transport> transport,
                             RetryPolicy retry)
    : endpoint_(std::move(endpoint)), transport_(std::move(transport)), retry_(std::move(retry)) {}

RetrievalResult HttpRetriever::retrieve(const std::string& question, std::size_t k) {
  RetrievalResult out;
  if (k == 0) return out;
  const json body = retrieval_request_json(question, k);
  const auto start = std::chrono::steady_clock::now();
  const json reply = with_retries(retry_, [&] { return transport_->post(endpoint_, body); });
  out.docs = parse_retrieval_body(reply);
  if (out.docs.size() > k) out.docs.resize(k);
  out.shortfall = out.docs.size() < k;
  out.latency_ms = elapsed_ms(start);
  return out;
}

HttpGradientSource::HttpGradientSource(HttpEndpoint endpoint, std::string run_id,
                                       std::shared_ptr<Transport> transport, RetryPolicy retry)
    : endpoint_(std::move(endpoint)),
      run_id_(std::move(run_id)),
      transport_(std::move(transport)),
      retry_(std::move(retry)) {}

GradientVector HttpGradientSource::mean() {
  const std::string path = "/mean?run_id=" + httplib::detail::encode_query_param(run_id_);
  const json reply = with_retries(retry_, [&] { return transport_->get(endpoint_, path); });
  const json& mean = require_field(reply, "mean", "gradient mean response");
  return GradientVector{"mean", mean.get<std::vector<double>>()};
}

GradientVector HttpGradientSource::gradient(const std::string& instance_id,
                                            const std::string& input_text,
                                            const std::string& target_text) {
  HttpEndpoint ep = endpoint_;
  ep.path = "/gradient";
  const json body{{"instance_id", instance_id},
                  {"input_text", input_text},
                  {"target_text", target_text}};
  const json reply = with_retries(retry_, [&] { return transport_->post(ep, body); });
  const json& grad = require_field(reply, "grad", "gradient response");
  return GradientVector{instance_id, grad.get<std::vector<double>>()};
}

// ---------------------------------------------------------------------------
// Call log
// ---------------------------------------------------------------------------

void CallLog::append(RetrievalCall call) {
  std::lock_guard lock(mu_);
  calls_.push_back(std::move(call));
}

std::vector<RetrievalCall> CallLog::snapshot() const {
  std::lock_guard lock(mu_);
  return calls_;
}

std::size_t CallLog::size() const {
  std::lock_guard lock(mu_);
  return calls_.size();
}

LoggingRetriever::LoggingRetriever(std::shared_ptr<Retriever> inner, std::shared_ptr<CallLog> log)
    : inner_(std::move(inner)), log_(std::move(log)) {}

RetrievalResult LoggingRetriever::retrieve(const std::string& question, std::size_t k) {
  log_->append({question, k});
  return inner_->retrieve(question, k);
}

// ---------------------------------------------------------------------------
// Simulated providers
// ---------------------------------------------------------------------------

namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

double unit_from(std::uint64_t x) { return static_cast<double>(splitmix(x) >> 11) * 0x1.0p-53; }

void sleep_ms(double ms) {
  if (ms <= 0.0) return;
  std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(ms));
}

}  // namespace

SimulatedGenerator::SimulatedGenerator(SimulatedLatency latency, std::uint64_t seed,
                                       std::map<std::string, std::string> answer_book,
                                       std::set<std::string> known_without_docs)
    : latency_(latency),
      seed_(seed),
      answer_book_(std::move(answer_book)),
      known_without_docs_(std::move(known_without_docs)) {}

GenerationResponse SimulatedGenerator::generate(const GenerationRequest& request) {
  request.validate();
  const auto start = std::chrono::steady_clock::now();
  const TokenSequence prompt = tokenize(request.prompt);
  const bool has_docs = request.prompt.find(kPromptDocumentsMarker) != std::string::npos;

  std::string answer;
  bool confident = false;
  // Longest matching question wins so that prefixes do not shadow.
  std::size_t best_len = 0;
  for (const auto& [question, a] : answer_book_) {
    if (question.size() > best_len && request.prompt.find(question) != std::string::npos) {
      if (has_docs || known_without_docs_.count(question)) {
        answer = a;
        confident = true;
      } else {
        answer.clear();
        confident = false;
      }
      best_len = question.size();
    }
  }
  if (answer.empty()) answer = "i am not sure";

  GenerationResponse r;
  r.text = answer;
  r.model_id = "simulated";
  r.tokens = tokenize(answer).tokens;
  const std::uint64_t base = fnv1a(request.prompt, splitmix(seed_));
  for (std::size_t i = 0; i < r.tokens.size(); ++i) {
    const double u = unit_from(base + i);
    r.token_probs.push_back(confident ? 0.7 + 0.3 * u : 0.05 + 0.35 * u);
  }
  sleep_ms(latency_.generation_ms_per_token * static_cast<double>(prompt.size()));
  r.latency_ms = elapsed_ms(start);
  return r;
}

SimulatedRetriever::SimulatedRetriever(SimulatedLatency latency,
                                       std::map<std::string, std::vector<RetrievedDoc>> corpus,
                                       std::size_t synthetic_docs,
                                       std::size_t synthetic_doc_tokens)
    : latency_(latency),
      corpus_(std::move(corpus)),
      synthetic_docs_(synthetic_docs),
      synthetic_doc_tokens_(synthetic_doc_tokens) {}

RetrievalResult SimulatedRetriever::retrieve(const std::string& question, std::size_t k) {
  RetrievalResult out;
  if (k == 0) return out;
  const auto start = std::chrono::steady_clock::now();
  auto it = corpus_.find(question);
  if (it != corpus_.end()) {
    for (std::size_t i = 0; i < it->second.size() && i < k; ++i) {
      RetrievedDoc d = it->second[i];
      d.rank = i + 1;
      out.docs.push_back(std::move(d));
    }
  } else {
    const std::uint64_t h = fnv1a(question);
    for (std::size_t i = 0; i < synthetic_docs_ && i < k; ++i) {
      RetrievedDoc d;
      d.doc_id = "syn-" + std::to_string(h % 100000) + "-" + std::to_string(i + 1);
      for (std::size_t t = 0; t < synthetic_doc_tokens_; ++t) {
        if (t) d.text.push_back(' ');
        d.text += "w" + std::to_string(splitmix(h + i * 1000 + t) % 5000);
      }
      d.score = 1.0 / static_cast<double>(i + 1);
      d.rank = i + 1;
      out.docs.push_back(std::move(d));
    }
  }
  out.shortfall = out.docs.size() < k;
  sleep_ms(latency_.retrieval_ms);
  out.latency_ms = elapsed_ms(start);
  return out;
}

StaticGradientSource::StaticGradientSource(GradientVector mean,
                                           std::map<std::string, GradientVector> per_instance)
    : mean_(std::move(mean)), per_instance_(std::move(per_instance)) {}

GradientVector StaticGradientSource::gradient(const std::string& instance_id, const std::string&,
                                              const std::string&) {
  auto it = per_instance_.find(instance_id);
  if (it == per_instance_.end()) {
    throw ProviderError("missing gradient for instance '" + instance_id + "'", false);
  }
  return it->second;
}

}  // namespace gece
