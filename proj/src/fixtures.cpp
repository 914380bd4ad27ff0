#include <fstream>

#include "gece/providers.hpp"

namespace gece {

FixtureMode parse_fixture_mode(const std::string& s) {
  if (s == "record") return FixtureMode::kRecord;
  if (s == "replay") return FixtureMode::kReplay;
  if (s == "passthrough") return FixtureMode::kPassthrough;
  throw std::invalid_argument("unknown fixture mode '" + s + "'");
}

std::string to_string(FixtureMode m) {
  switch (m) {
    case FixtureMode::kRecord:
      return "record";
    case FixtureMode::kReplay:
      return "replay";
    case FixtureMode::kPassthrough:
      return "passthrough";
  }
  return "unknown";
}

FixtureStore::FixtureStore(std::string path, FixtureMode mode)
    : path_(std::move(path)), mode_(mode) {
  std::ifstream in(path_);
  if (!in) {
    if (mode_ == FixtureMode::kReplay) throw LoadError("cannot open fixture file " + path_);
    return;
  }
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      json entry = json::parse(line);
      entries_[entry.at("digest").get<std::string>()] = std::move(entry.at("response"));
    } catch (const json::exception& e) {
      throw LoadError(path_ + ":" + std::to_string(line_no) + ": malformed fixture: " + e.what());
    }
  }
}

std::size_t FixtureStore::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

std::optional<json> FixtureStore::lookup(const std::string& digest) const {
  std::shared_lock lock(mu_);
  auto it = entries_.find(digest);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void FixtureStore::record(const std::string& digest, const json& request, const json& response) {
  std::unique_lock lock(mu_);
  if (entries_.count(digest)) return;
  entries_[digest] = response;
  std::ofstream out(path_, std::ios::app);
  if (!out) throw LoadError("cannot append to fixture file " + path_);
  out << json{{"digest", digest}, {"request", request}, {"response", response}}.dump() << '\n';
}

namespace {

json generation_digest_request(const GenerationRequest& request) {
  json j = to_json(request);
  j["kind"] = "generate";
  return j;
}

json retrieval_digest_request(const std::string& question, std::size_t k) {
  json j = retrieval_request_json(question, k);
  j["kind"] = "retrieve";
  return j;
}

}  // namespace

FixtureGenerator::FixtureGenerator(std::shared_ptr<FixtureStore> store,
                                   std::shared_ptr<Generator> live)
    : store_(std::move(store)), live_(std::move(live)) {}

GenerationResponse FixtureGenerator::generate(const GenerationRequest& request) {
  if (store_->mode() == FixtureMode::kPassthrough) return live_->generate(request);
  const json req = generation_digest_request(request);
  const std::string digest = canonical_digest(req);
  if (auto hit = store_->lookup(digest)) return generation_response_from_json(*hit);
  if (store_->mode() == FixtureMode::kReplay) {
    throw FixtureMiss("no recorded generation for digest " + digest);
  }
  GenerationResponse r = live_->generate(request);
  store_->record(digest, req, to_json(r));
  return r;
}

FixtureRetriever::FixtureRetriever(std::shared_ptr<FixtureStore> store,
                                   std::shared_ptr<Retriever> live)
    : store_(std::move(store)), live_(std::move(live)) {}

RetrievalResult FixtureRetriever::retrieve(const std::string& question, std::size_t k) {
  if (store_->mode() == FixtureMode::kPassthrough) return live_->retrieve(question, k);
  if (k == 0) return {};
  const json req = retrieval_digest_request(question, k);
  const std::string digest = canonical_digest(req);
  if (auto hit = store_->lookup(digest)) return retrieval_result_from_json(*hit);
  if (store_->mode() == FixtureMode::kReplay) {
    throw FixtureMiss("no recorded retrieval for digest " + digest);
  }
  RetrievalResult r = live_->retrieve(question, k);
  store_->record(digest, req, to_json(r));
  return r;
}

}  // namespace gece
