// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "gece/harness.hpp"
#include "gece/tokenize.hpp"

using namespace gece;
namespace fs = std::filesystem;

namespace {

constexpr double kEceTolerance = 1e-12;
constexpr double kEceBudgetSeconds = 1.0;
constexpr double kMeteorTolerance = 1e-6;
constexpr double kMeteorIdentityTolerance = 1e-15;
constexpr double kGeceRelTolerance = 1e-12;
constexpr double kSpeedupRelTolerance = 0.10;
constexpr double kSpeedupClaim = 4.0;
constexpr double kSpeedupBudgetSeconds = 30.0;
constexpr std::size_t kDocBudget = 512;

struct Outcome {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

fs::path work_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("gece_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + GECE_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const fs::path kSampleConfig = fs::path(GECE_DATA_DIR) / "sample" / "sample.toml";

// ---------------------------------------------------------------------------

double brute_ece(const std::vector<CalibrationRecord>& recs, std::size_t bins) {
  double total = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    const double lo = double(b) / double(bins), hi = double(b + 1) / double(bins);
    double conf = 0.0, acc = 0.0, n = 0.0;
    for (const auto& r : recs) {
      const bool in = r.confidence >= lo && (b + 1 == bins ? r.confidence <= 1.0 : r.confidence < hi);
      if (!in) continue;
      conf += r.confidence;
      acc += r.correct;
      n += 1;
    }
    if (n > 0) total += n / double(recs.size()) * std::abs(acc / n - conf / n);
  }
  return total;
}

Outcome ece_oracle() {
  std::mt19937 rng(200);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::vector<CalibrationRecord>> sets;
  std::vector<std::size_t> bins;
  for (int t = 0; t < 200; ++t) {
    std::vector<CalibrationRecord> r;
    const std::size_t n = 1 + rng() % 50;
    for (std::size_t i = 0; i < n; ++i) {
      double c = u(rng);
      if (rng() % 4 == 0) c = double(rng() % 11) / 10.0;
      r.push_back({c, rng() % 2 == 0});
    }
    sets.push_back(std::move(r));
    bins.push_back(1 + rng() % 10);
  }
  const auto start = Clock::now();
  std::vector<double> got;
  for (std::size_t i = 0; i < sets.size(); ++i) got.push_back(ece(sets[i], bins[i]));
  const double elapsed = seconds_since(start);
  double worst = 0.0;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    worst = std::max(worst, std::abs(got[i] - brute_ece(sets[i], bins[i])));
  }
  Outcome o;
  o.pass = worst < kEceTolerance && elapsed < kEceBudgetSeconds;
  o.detail = "200 sets, max |diff| " + fmt("%.3g", worst) + ", " + fmt("%.4f", elapsed) + " s";
  return o;
}

Outcome meteor_conformance() {
  // Reference scores computed ahead of the build with an independent
  // METEOR implementation (exact + Porter stem stages, no synonyms).
  struct Pair {
    const char* pred;
    const char* ref;
    double expected;
  };
  const Pair table[] = {
      {"the cat sat on the mat", "the cat sat on the mat", 0.997685185185},
      {"thomas mueller was named player", "yaya toure was named african footballer of the year",
       0.218023255814},
      {"the players were running quickly", "the player runs quick", 0.623306233062},
      {"paris is the capital of france", "the capital of france is paris", 0.9375},
      {"raoul was played by patrick wilson in the film", "patrick wilson played raoul",
       0.701388888889},
  };
  double worst = 0.0;
  for (const auto& p : table) {
    worst = std::max(worst, std::abs(meteor(tokenize(p.pred), tokenize(p.ref)).value - p.expected));
  }
  double worst_identity = 0.0;
  for (int m = 1; m <= 40; ++m) {
    std::string s;
    for (int i = 0; i < m; ++i) s += "w" + std::to_string(i) + " ";
    const auto t = tokenize(s);
    const double expect = 1.0 - 0.5 * std::pow(1.0 / m, 3);
    worst_identity = std::max(worst_identity, std::abs(meteor(t, t).value - expect));
  }
  Outcome o;
  o.pass = worst < kMeteorTolerance && worst_identity <= kMeteorIdentityTolerance;
  o.detail = "5-pair max |diff| " + fmt("%.3g", worst) + ", identity m=1..40 max |diff| " +
             fmt("%.3g", worst_identity);
  return o;
}

Outcome gece_algebra() {
  std::mt19937 rng(100);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  std::size_t mono_checked = 0, mono_failed = 0;
  for (int t = 0; t < 100; ++t) {
    GeceInputs in;
    in.agreement = u(rng);
    in.mean_token_prob = 1e-3 + (1.0 - 1e-3) * u(rng);
    in.alpha = std::pow(10.0, -8.0 + 7.0 * u(rng));
    in.gradient_dot = t % 10 == 0 ? -u(rng) : std::pow(10.0, -8.0 + 10.0 * u(rng));
    const double direct =
        std::abs(in.agreement - in.mean_token_prob) / (in.alpha * std::max(in.gradient_dot, 1e-6));
    const double v = gece::gece(in).value;
    if (direct != 0.0) worst = std::max(worst, std::abs(v - direct) / direct);
    else worst = std::max(worst, std::abs(v));

    if (in.agreement == in.mean_token_prob) continue;
    GeceInputs a2 = in;
    a2.alpha *= 1.0 + u(rng) + 1e-6;
    GeceInputs d2 = in;
    d2.gradient_dot = std::max(in.gradient_dot, 1e-6) * (1.0 + u(rng) + 1e-6);
    mono_checked += 2;
    if (!(gece::gece(a2).value < v)) ++mono_failed;
    if (!(gece::gece(d2).value < v)) ++mono_failed;
  }
  Outcome o;
  o.pass = worst < kGeceRelTolerance && mono_failed == 0;
  o.detail = "100 inputs, max rel diff " + fmt("%.3g", worst) + ", monotonicity " +
             std::to_string(mono_checked - mono_failed) + "/" + std::to_string(mono_checked);
  return o;
}

Outcome threshold_exactness() {
  std::mt19937 rng(50);
  std::size_t bad_counts = 0, bad_perms = 0;
  auto long_tail = [](const std::vector<InstanceScore>& s) {
    std::set<std::string> ids;
    for (const auto& x : s)
      if (x.route == Route::kLongTail) ids.insert(x.instance_id);
    return ids;
  };
  for (std::size_t n = 1; n <= 50; ++n) {
    std::vector<InstanceScore> s(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i].instance_id = "id" + std::to_string(1000 + i);
      s[i].gece.value = double(rng() % 6);  // heavy ties
    }
    auto routed = s;
    assign_routes(routed, ThresholdPolicy{0.2});
    const auto ids = long_tail(routed);
    const auto want = static_cast<std::size_t>(std::ceil(0.2 * double(n) - 1e-9));
    if (ids.size() != want) ++bad_counts;
    if (n == 50) {
      for (int k = 0; k < 100; ++k) {
        auto p = s;
        std::shuffle(p.begin(), p.end(), rng);
        assign_routes(p, ThresholdPolicy{0.2});
        if (long_tail(p) != ids) ++bad_perms;
      }
    }
  }
  Outcome o;
  o.pass = bad_counts == 0 && bad_perms == 0;
  o.detail = "N=1..50 count mismatches " + std::to_string(bad_counts) +
             ", 100 shuffles mismatches " + std::to_string(bad_perms);
  return o;
}

Outcome routing_contract() {
  RunConfig c = load_run_config(ConfigFile::load(kSampleConfig.string()));
  c.k = 15;
  c.mode = RunMode::kSelective;
  c.runs = 1;
  c.sim_generation_ms_per_token = 0.0;
  c.sim_retrieval_ms = 0.0;
  c.fixtures = (work_dir() / "routing_fixtures.jsonl").string();
  c.fixture_mode = FixtureMode::kRecord;
  {
    ProviderSet rec = build_providers(c);
    run_experiment(c, rec);
  }
  c.fixture_mode = FixtureMode::kReplay;
  ProviderSet p = build_providers(c);
  const RunReport r = run_experiment(c, p);

  std::set<std::string> tail_questions, common_questions;
  const auto records = load_dataset(c.dataset_path);
  std::map<std::string, Route> route;
  for (const auto& s : r.scores.scores) route[s.instance_id] = s.route;
  for (const auto& rec : records) {
    (route.at(rec.instance_id) == Route::kLongTail ? tail_questions : common_questions)
        .insert(query_text(rec));
  }
  const auto calls = p.call_log->snapshot();
  std::set<std::string> called;
  std::size_t wrong_k = 0, common_hits = 0;
  for (const auto& call : calls) {
    called.insert(call.question);
    if (call.k != c.k) ++wrong_k;
    if (common_questions.count(call.question)) ++common_hits;
  }
  Outcome o;
  o.pass = records.size() == 50 && tail_questions.size() == 10 && calls.size() == 10 &&
           wrong_k == 0 && common_hits == 0 && called == tail_questions;
  o.detail = std::to_string(records.size()) + " queries, " + std::to_string(tail_questions.size()) +
             " long tail, " + std::to_string(calls.size()) + " retrieval calls (k=" +
             std::to_string(c.k) + ", wrong k " + std::to_string(wrong_k) + "), common hits " +
             std::to_string(common_hits);
  return o;
}

Outcome speedup_model() {
  const double R = 400.0, g = 1.0, tail_fraction = 0.2;
  const std::size_t k = 10, d = 50, q_tokens = 100, n = 50;
  const double full = R + g * double(q_tokens + k * d);
  const double closed_form = full / ((1.0 - tail_fraction) * g * double(q_tokens) + tail_fraction * full);

  SimulatedLatency lat{g, R};
  SimulatedGenerator gen(lat, 1);
  SimulatedRetriever ret(lat, {}, 20, d);
  std::vector<Query> always, selective;
  for (std::size_t i = 0; i < n; ++i) {
    std::string q;
    for (std::size_t t = 0; t < q_tokens; ++t) q += "q" + std::to_string(i) + "x" + std::to_string(t) + " ";
    Query base{"s" + std::to_string(100 + i), q, Route::kLongTail};
    always.push_back(base);
    base.route = i < std::size_t(tail_fraction * double(n)) ? Route::kLongTail : Route::kCommon;
    selective.push_back(base);
  }
  BatchConfig cfg;
  cfg.answer.k = k;
  cfg.parallelism = 25;
  const auto start = Clock::now();
  const BatchResult a = run_batch(always, gen, ret, cfg);
  const BatchResult s = run_batch(selective, gen, ret, cfg);
  const double elapsed = seconds_since(start);
  const double measured = measure_speedup(a.results, s.results);
  const bool within = std::abs(measured - closed_form) / closed_form <= kSpeedupRelTolerance;
  const bool exceeds = measured > kSpeedupClaim;
  Outcome o;
  o.pass = within && exceeds && elapsed < kSpeedupBudgetSeconds && a.timing.failures == 0 &&
           s.timing.failures == 0;
  o.detail = "measured " + fmt("%.3f", measured) + "x, closed form " + fmt("%.3f", closed_form) +
             "x (within 10%: " + (within ? "yes" : "no") + "; > 4.0: " + (exceeds ? "yes" : "no") +
             "), " + fmt("%.1f", elapsed) + " s";
  return o;
}

Outcome determinism() {
  const fs::path fx = work_dir() / "determinism_fixtures.jsonl";
  const fs::path a = work_dir() / "report_a.json", b = work_dir() / "report_b.json";
  const std::string cfg = "--config \"" + kSampleConfig.string() + "\" --seed 7 --fixtures \"" +
                          fx.string() + "\"";
  const int rec = run_cli("record-fixtures " + cfg);
  const int ra = run_cli("run " + cfg + " --fixture-mode replay --out \"" + a.string() + "\"");
  const int rb = run_cli("run " + cfg + " --fixture-mode replay --out \"" + b.string() + "\"");
  const std::string ja = slurp(a), jb = slurp(b);
  Outcome o;
  o.pass = rec == 0 && ra == 0 && rb == 0 && !ja.empty() && ja == jb &&
           ja.find("\"passes\"") != std::string::npos;
  o.detail = "exit codes " + std::to_string(rec) + "/" + std::to_string(ra) + "/" +
             std::to_string(rb) + ", report " + std::to_string(ja.size()) + " bytes, identical: " +
             (ja == jb && !ja.empty() ? "yes" : "no");
  return o;
}

std::vector<json> read_jsonl(const fs::path& p) {
  std::vector<json> out;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(json::parse(line));
  return out;
}

Outcome ablation_wiring() {
  const fs::path scores = work_dir() / "scores_meteor.jsonl", table = work_dir() / "scatter.tsv";
  const std::string cfg = "--config \"" + kSampleConfig.string() + "\"";
  int rc = run_cli("score " + cfg + " --out \"" + scores.string() + "\"");
  rc |= run_cli("scatter --scores \"" + scores.string() + "\" --variant no_stats_semantics --out \"" +
                table.string() + "\"");
  std::map<std::string, json> by_id;
  for (const auto& j : read_jsonl(scores)) by_id[j.at("instance_id").get<std::string>()] = j;

  std::size_t rows = 0, mismatched = 0;
  std::ifstream in(table);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string id, value, full, ablated, route;
    std::getline(ls, id, '\t');
    std::getline(ls, value, '\t');
    std::getline(ls, full, '\t');
    std::getline(ls, ablated, '\t');
    ++rows;
    const json& s = by_id.at(id);
    const double expect = std::abs(s.at("meteor").get<double>() - s.at("mean_prob").get<double>());
    if (std::strtod(value.c_str(), nullptr) != expect) ++mismatched;
  }

  std::size_t swapped = 0, out_of_range = 0;
  for (const char* metric : {"chrf", "ter"}) {
    const fs::path p = work_dir() / (std::string("scores_") + metric + ".jsonl");
    rc |= run_cli("score " + cfg + " --metric " + metric + " --out \"" + p.string() + "\"");
    for (const auto& j : read_jsonl(p)) {
      ++swapped;
      const double num = std::abs(j.at("meteor").get<double>() - j.at("mean_prob").get<double>());
      if (!(num >= 0.0 && num <= 1.0) || j.at("metric") != metric) ++out_of_range;
    }
  }
  Outcome o;
  o.pass = rc == 0 && rows == by_id.size() && rows > 0 && mismatched == 0 && swapped == 2 * rows &&
           out_of_range == 0;
  o.detail = std::to_string(rows) + " scatter rows, " + std::to_string(mismatched) +
             " inexact; chrF/TER runs " + std::to_string(swapped) + " scores, " +
             std::to_string(out_of_range) + " numerators outside [0,1]";
  return o;
}

Outcome document_budget() {
  std::mt19937 rng(512);
  std::size_t over = 0, bad_prefix = 0, bad_trunc = 0;
  for (int t = 0; t < 2000; ++t) {
    std::vector<RetrievedDoc> docs;
    const std::size_t n = rng() % 30;
    for (std::size_t i = 0; i < n; ++i) {
      std::string text;
      const std::size_t len = rng() % 200;
      for (std::size_t w = 0; w < len; ++w) text += (rng() % 7 == 0 ? "x, " : "tok ");
      docs.push_back({"d" + std::to_string(i), text, 1.0, i + 1});
    }
    const auto p = assemble_prompt("question", docs, kDocBudget);
    if (p.doc_token_count > kDocBudget) ++over;
    for (std::size_t i = 0; i < p.included_doc_ids.size(); ++i) {
      if (p.included_doc_ids[i] != docs[i].doc_id) ++bad_prefix;
      const std::size_t full = tokenize(docs[i].text).size();
      if (i + 1 < p.included_doc_ids.size() && p.included_doc_tokens[i] != full) ++bad_trunc;
    }
  }
  Outcome o;
  o.pass = over == 0 && bad_prefix == 0 && bad_trunc == 0;
  o.detail = "2000 doc sets, over budget " + std::to_string(over) + ", non-prefix " +
             std::to_string(bad_prefix) + ", truncated before last " + std::to_string(bad_trunc);
  return o;
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"ece_oracle_equivalence", ece_oracle},
      {"meteor_conformance", meteor_conformance},
      {"gece_algebra", gece_algebra},
      {"threshold_exactness", threshold_exactness},
      {"routing_contract", routing_contract},
      {"speedup_model", speedup_model},
      {"determinism", determinism},
      {"ablation_wiring", ablation_wiring},
      {"document_budget", document_budget},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s  %-24s %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  std::printf("%d of %zu criteria failed\n", failures, std::size(criteria));
  fs::remove_all(work_dir());
  return failures == 0 ? 0 : 1;
}
