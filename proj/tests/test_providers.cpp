#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include <unistd.h>

#include <httplib.h>

#include "gece/providers.hpp"

using namespace gece;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "gece_provider_tests";
  fs::create_directories(dir);
  const fs::path p = dir / (name + "-" + std::to_string(::getpid()) + ".jsonl");
  fs::remove(p);
  return p;
}

class ScriptedTransport : public Transport {
 public:
  std::vector<std::function<json()>> script;
  std::vector<json> bodies;
  std::vector<std::string> gets;
  int calls = 0;

  json post(const HttpEndpoint&, const json& body) override {
    bodies.push_back(body);
    return script.at(calls++)();
  }
  json get(const HttpEndpoint&, const std::string& pq) override {
    gets.push_back(pq);
    return script.at(calls++)();
  }
};

class FailingTransport : public Transport {
 public:
  json post(const HttpEndpoint&, const json&) override { FAIL("live provider was called"); return {}; }
  json get(const HttpEndpoint&, const std::string&) override { FAIL("live provider was called"); return {}; }
};

class CountingGenerator : public Generator {
 public:
  GenerationResponse generate(const GenerationRequest& req) override {
    ++calls;
    GenerationResponse r;
    r.text = "echo " + req.prompt;
    r.tokens = {"echo"};
    r.token_probs = {0.123456789};
    r.latency_ms = 17.25;
    return r;
  }
  int calls = 0;
};

RetryPolicy no_sleep(std::vector<long>* slept = nullptr) {
  RetryPolicy p;
  p.sleep = [slept](std::chrono::milliseconds ms) {
    if (slept) slept->push_back(static_cast<long>(ms.count()));
  };
  return p;
}

}  // namespace

TEST_CASE("canonical_digest ignores key order and float noise") {
  const json a = json::parse(R"({"prompt":"x","temperature":0.6,"top_p":0.9})");
  const json b = json::parse(R"({"top_p":0.9000000001,"prompt":"x","temperature":0.6})");
  CHECK(canonical_digest(a) == canonical_digest(b));
  const json c = json::parse(R"({"prompt":"x","temperature":0.61,"top_p":0.9})");
  CHECK(canonical_digest(a) != canonical_digest(c));
  CHECK(canonical_digest(a).size() == 64);
  // sha256 of "{}"
  CHECK(canonical_digest(json::object()) ==
        "44136fa355b3678a1146ad16f7e8649e94fb4fc21fe77e8310c060f61caaff8a");
}

TEST_CASE("request validation") {
  GenerationRequest r;
  r.prompt = "p";
  CHECK_NOTHROW(r.validate());
  r.top_p = 0.0;
  CHECK_THROWS(r.validate());
  r.top_p = 0.9;
  r.max_tokens = 0;
  CHECK_THROWS(r.validate());
}

TEST_CASE("parse_completion_body exponentiates log-probabilities") {
  const auto r = parse_completion_body(
      json::parse(R"({"text":"paris","tokens":["par","is"],"token_logprobs":[0.0,-0.6931471805599453]})"));
  CHECK(r.text == "paris");
  REQUIRE(r.token_probs.size() == 2);
  CHECK(r.token_probs[0] == 1.0);
  CHECK(r.token_probs[1] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("parse_completion_body errors") {
  CHECK_THROWS_WITH(parse_completion_body(json::parse(R"({"text":"a","tokens":["a"]})")),
                    "provider lacks token probabilities");
  CHECK_THROWS_WITH(
      parse_completion_body(json::parse(R"({"text":"a","tokens":["a"],"token_logprobs":null})")),
      "provider lacks token probabilities");
  CHECK_THROWS_WITH(parse_completion_body(json::parse(R"({"tokens":[],"token_logprobs":[]})")),
                    doctest::Contains("'text'"));
  CHECK_THROWS_WITH(
      parse_completion_body(json::parse(R"({"text":"a","tokens":["a","b"],"token_logprobs":[-1]})")),
      doctest::Contains("mismatch"));
  CHECK_THROWS(
      parse_completion_body(json::parse(R"({"text":"a","tokens":["a"],"token_logprobs":[0.5]})")));
}

TEST_CASE("parse_retrieval_body") {
  const auto docs = parse_retrieval_body(
      json::parse(R"({"docs":[{"id":"d1","text":"t1","score":0.9},{"id":7,"text":"t2","score":0.5}]})"));
  REQUIRE(docs.size() == 2);
  CHECK(docs[0].rank == 1);
  CHECK(docs[1].doc_id == "7");
  CHECK(docs[1].rank == 2);
  CHECK_THROWS_WITH(parse_retrieval_body(json::parse(R"({"documents":[]})")),
                    doctest::Contains("'docs'"));
  CHECK_THROWS_WITH(parse_retrieval_body(json::parse(R"({"docs":[{"id":"x","score":1}]})")),
                    doctest::Contains("'text'"));
}

TEST_CASE("with_retries backs off and gives up") {
  std::vector<long> slept;
  int n = 0;
  auto flaky = [&]() -> json {
    if (++n < 3) throw ProviderError("503", true);
    return json{{"ok", true}};
  };
  CHECK(with_retries(no_sleep(&slept), flaky).at("ok") == true);
  CHECK(slept == std::vector<long>{250, 500});

  n = 0;
  slept.clear();
  auto always = [&]() -> json {
    ++n;
    throw ProviderError("503", true);
  };
  CHECK_THROWS_AS(with_retries(no_sleep(&slept), always), ProviderError);
  CHECK(n == 3);

  n = 0;
  auto fatal = [&]() -> json {
    ++n;
    throw ProviderError("400", false);
  };
  CHECK_THROWS_AS(with_retries(no_sleep(), fatal), ProviderError);
  CHECK(n == 1);
}

TEST_CASE("HttpGenerator over a scripted transport") {
  auto t = std::make_shared<ScriptedTransport>();
  t->script.push_back([]() -> json { throw ProviderError("timeout", true); });
  t->script.push_back(
      [] { return json::parse(R"({"text":"ok","tokens":["ok"],"token_logprobs":[-0.1]})"); });
  HttpGenerator g({"http://unused", "/v1/completions", "", std::chrono::milliseconds(100)}, t,
                  no_sleep());
  GenerationRequest req;
  req.prompt = "q";
  const auto r = g.generate(req);
  CHECK(r.text == "ok");
  CHECK(r.token_probs[0] == doctest::Approx(std::exp(-0.1)));
  CHECK(t->calls == 2);
  CHECK(t->bodies[0].at("temperature") == 0.6);
  CHECK(t->bodies[0].at("top_p") == 0.9);
  CHECK(t->bodies[0].at("logprobs") == true);
}

TEST_CASE("HttpRetriever: k=0 makes no call, shortfall is flagged") {
  auto t = std::make_shared<ScriptedTransport>();
  t->script.push_back([] { return json::parse(R"({"docs":[{"id":"a","text":"x","score":1}]})"); });
  HttpRetriever r({"http://unused", "/retrieve", "", std::chrono::milliseconds(100)}, t, no_sleep());
  CHECK(r.retrieve("q", 0).docs.empty());
  CHECK(t->calls == 0);
  const auto res = r.retrieve("q", 10);
  CHECK(t->calls == 1);
  CHECK(res.docs.size() == 1);
  CHECK(res.shortfall);
  CHECK(t->bodies[0] == json{{"query", "q"}, {"k", 10}});
}

TEST_CASE("HttpGradientSource requests") {
  auto t = std::make_shared<ScriptedTransport>();
  t->script.push_back([] { return json{{"mean", {1.0, 2.0}}}; });
  t->script.push_back([] { return json{{"grad", {3.0, 4.0}}}; });
  HttpGradientSource g({"http://unused", "", "", std::chrono::milliseconds(100)}, "run 1", t,
                       no_sleep());
  CHECK(g.mean().values == std::vector<double>{1.0, 2.0});
  CHECK(t->gets[0] == "/mean?run_id=run%201");
  const auto v = g.gradient("i1", "question", "answer");
  CHECK(v.instance_id == "i1");
  CHECK(v.values == std::vector<double>{3.0, 4.0});
  CHECK(t->bodies[0].at("target_text") == "answer");
}

TEST_CASE("http clients against a local server") {
  httplib::Server srv;
  int generate_hits = 0;
  std::string seen_auth;
  srv.Post("/v1/completions", [&](const httplib::Request& req, httplib::Response& res) {
    ++generate_hits;
    seen_auth = req.get_header_value("Authorization");
    if (generate_hits == 1) {
      res.status = 503;
      return;
    }
    const json body = json::parse(req.body);
    res.set_content(json{{"text", "re: " + body.at("prompt").get<std::string>()},
                         {"tokens", {"re"}},
                         {"token_logprobs", {0.0}}}
                        .dump(),
                    "application/json");
  });
  srv.Post("/retrieve", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"docs":[{"id":"a","text":"alpha","score":2.0},{"id":"b","text":"beta","score":1.0}]})",
                    "application/json");
  });
  srv.Post("/gradient", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"grad":[0.5,0.25]})", "application/json");
  });
  srv.Get("/mean", [](const httplib::Request& req, httplib::Response& res) {
    if (req.get_param_value("run_id") != "r1") {
      res.status = 404;
      return;
    }
    res.set_content(R"({"mean":[1.0,1.0]})", "application/json");
  });
  srv.Post("/broken", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("not json", "application/json");
  });
  const int port = srv.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread th([&] { srv.listen_after_bind(); });
  srv.wait_until_ready();

  const std::string base = "http://127.0.0.1:" + std::to_string(port);
  auto transport = make_http_transport();
  const std::chrono::milliseconds timeout(2000);

  HttpGenerator gen({base, "/v1/completions", "tok", timeout}, transport, no_sleep());
  GenerationRequest req;
  req.prompt = "hello";
  const auto r = gen.generate(req);
  CHECK(r.text == "re: hello");
  CHECK(r.token_probs == std::vector<double>{1.0});
  CHECK(generate_hits == 2);
  CHECK(seen_auth == "Bearer tok");

  HttpRetriever ret({base, "/retrieve", "", timeout}, transport, no_sleep());
  const auto docs = ret.retrieve("q", 2);
  REQUIRE(docs.docs.size() == 2);
  CHECK(docs.docs[1].text == "beta");
  CHECK_FALSE(docs.shortfall);

  HttpGradientSource grads({base, "", "", timeout}, "r1", transport, no_sleep());
  CHECK(grads.mean().values == std::vector<double>{1.0, 1.0});
  CHECK(grads.gradient("x", "q", "a").values == std::vector<double>{0.5, 0.25});
  HttpGradientSource wrong({base, "", "", timeout}, "nope", transport, no_sleep());
  CHECK_THROWS_AS(wrong.mean(), ProviderError);

  HttpRetriever broken({base, "/broken", "", timeout}, transport, no_sleep());
  CHECK_THROWS_WITH(broken.retrieve("q", 1), doctest::Contains("malformed"));

  srv.stop();
  th.join();

  HttpRetriever down({base, "/retrieve", "", std::chrono::milliseconds(200)}, transport, no_sleep());
  try {
    down.retrieve("q", 1);
    FAIL("expected a transport error");
  } catch (const ProviderError& e) {
    CHECK(e.retryable());
  }
}

TEST_CASE("fixture record then replay without the live provider") {
  const auto path = scratch("roundtrip");
  auto live = std::make_shared<CountingGenerator>();
  GenerationRequest req;
  req.prompt = "what is up";
  {
    auto store = std::make_shared<FixtureStore>(path.string(), FixtureMode::kRecord);
    FixtureGenerator g(store, live);
    const auto a = g.generate(req);
    const auto b = g.generate(req);
    CHECK(live->calls == 1);
    CHECK(a.text == b.text);
  }
  auto store = std::make_shared<FixtureStore>(path.string(), FixtureMode::kReplay);
  CHECK(store->size() == 1);
  auto dead = std::make_shared<HttpGenerator>(HttpEndpoint{"http://unused", "/", "", {}},
                                              std::make_shared<FailingTransport>(), no_sleep());
  FixtureGenerator g(store, dead);
  const auto r = g.generate(req);
  CHECK(r.text == "echo what is up");
  CHECK(r.token_probs == std::vector<double>{0.123456789});
  CHECK(r.latency_ms == 17.25);

  GenerationRequest other = req;
  other.prompt = "unseen";
  CHECK_THROWS_AS(g.generate(other), FixtureMiss);
}

TEST_CASE("fixture retriever round trip and missing file in replay") {
  const auto path = scratch("retrieval");
  auto sim = std::make_shared<SimulatedRetriever>(SimulatedLatency{0.0, 0.0});
  RetrievalResult first;
  {
    auto store = std::make_shared<FixtureStore>(path.string(), FixtureMode::kRecord);
    FixtureRetriever r(store, sim);
    first = r.retrieve("who", 3);
  }
  auto store = std::make_shared<FixtureStore>(path.string(), FixtureMode::kReplay);
  auto dead = std::make_shared<HttpRetriever>(HttpEndpoint{"http://unused", "/", "", {}},
                                              std::make_shared<FailingTransport>(), no_sleep());
  FixtureRetriever r(store, dead);
  const auto again = r.retrieve("who", 3);
  REQUIRE(again.docs.size() == 3);
  CHECK(to_json(again) == to_json(first));

  CHECK_THROWS_AS(FixtureStore((path.string() + ".absent"), FixtureMode::kReplay), LoadError);
  CHECK_NOTHROW(FixtureStore((path.string() + ".absent"), FixtureMode::kRecord));
}

TEST_CASE("fixture mode names") {
  for (auto m : {FixtureMode::kRecord, FixtureMode::kReplay, FixtureMode::kPassthrough})
    CHECK(parse_fixture_mode(to_string(m)) == m);
  CHECK_THROWS(parse_fixture_mode("live"));
}

TEST_CASE("logging retriever records every call") {
  auto log = std::make_shared<CallLog>();
  LoggingRetriever r(std::make_shared<SimulatedRetriever>(SimulatedLatency{0.0, 0.0}), log);
  r.retrieve("a", 10);
  r.retrieve("b", 15);
  const auto calls = log->snapshot();
  REQUIRE(calls.size() == 2);
  CHECK(calls[1].question == "b");
  CHECK(calls[1].k == 15);
}

TEST_CASE("simulated generator is deterministic per prompt and seed") {
  SimulatedGenerator g({0.0, 0.0}, 7, {{"capital of france", "paris"}}, {});
  GenerationRequest bare;
  bare.prompt = "Question: capital of france\nAnswer:";
  GenerationRequest aug = bare;
  aug.prompt = std::string(kPromptDocumentsMarker) + "[1] x\n\n" + bare.prompt;
  const auto a1 = g.generate(bare), a2 = g.generate(bare);
  CHECK(a1.text == "i am not sure");
  CHECK(a1.token_probs == a2.token_probs);
  for (double p : a1.token_probs) CHECK(p < 0.4);
  const auto b = g.generate(aug);
  CHECK(b.text == "paris");
  for (double p : b.token_probs) CHECK(p >= 0.7);

  SimulatedGenerator other({0.0, 0.0}, 8, {{"capital of france", "paris"}}, {});
  CHECK(other.generate(bare).token_probs != a1.token_probs);
}

TEST_CASE("word frequency loader") {
  std::istringstream ok("# comment\nthe\t0.05\ncat\t0.001\n\n");
  const auto t = parse_word_frequency_table(ok, "mini");
  CHECK(t.size() == 2);
  CHECK(t.lookup("the") == 0.05);
  CHECK(t.lookup("zebra") == 1e-8);

  auto fails_with = [](const std::string& text, const std::string& needle) {
    std::istringstream in(text);
    CHECK_THROWS_WITH_AS(parse_word_frequency_table(in, "bad"), doctest::Contains(needle.c_str()),
                         LoadError);
  };
  fails_with("a\t0.1\na\t0.2\n", "duplicate token 'a'");
  fails_with("a\t0\n", "non-positive");
  fails_with("a\t-0.5\n", "non-positive");
  fails_with("a\tx\n", "malformed frequency");
  fails_with("a 0.1\n", "expected");
  fails_with("a\t0.7\nb\t0.7\n", "> 1");
  fails_with("# only comments\n", "empty table");
  fails_with("a\t0.1\nb\tz\n", "bad:2:");
}

TEST_CASE("gradient loader and mean recompute") {
  std::mt19937 rng(5);
  std::normal_distribution<double> nd;
  std::vector<GradientVector> gs;
  for (int i = 0; i < 6; ++i) {
    GradientVector g{"g" + std::to_string(i), {}};
    for (int j = 0; j < 4; ++j) g.values.push_back(nd(rng));
    gs.push_back(g);
  }
  const auto mean = dataset_mean_gradient(gs);
  std::ostringstream file;
  file << json{{"mean", mean.values}}.dump() << "\n";
  for (const auto& g : gs) file << json{{"instance_id", g.instance_id}, {"grad", g.values}}.dump() << "\n";
  std::istringstream in(file.str());
  const auto loaded = parse_gradients(in);
  CHECK(loaded.per_instance.size() == 6);
  std::vector<GradientVector> back;
  for (const auto& [id, g] : loaded.per_instance) back.push_back(g);
  const auto recomputed = dataset_mean_gradient(back);
  for (int j = 0; j < 4; ++j) CHECK(std::abs(recomputed.values[j] - loaded.mean.values[j]) < 1e-6);

  std::istringstream no_mean(R"({"instance_id":"a","grad":[1]})");
  CHECK_THROWS_WITH(parse_gradients(no_mean), doctest::Contains("missing mean line"));
  std::istringstream mismatch("{\"mean\":[1,2]}\n{\"instance_id\":\"short\",\"grad\":[1]}\n");
  CHECK_THROWS_WITH(parse_gradients(mismatch), doctest::Contains("'short'"));
}
