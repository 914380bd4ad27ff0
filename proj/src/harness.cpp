#include "gece/harness.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

namespace gece {

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

DatasetSchema parse_dataset_schema(const std::string& s) {
  if (s == "auto") return DatasetSchema::kAuto;
  if (s == "open_qa" || s == "nq" || s == "triviaqa") return DatasetSchema::kOpenQa;
  if (s == "multiple_choice" || s == "mmlu") return DatasetSchema::kMultipleChoice;
  throw std::invalid_argument("unknown dataset schema '" + s + "'");
}

namespace {

std::string id_string(const json& id) { return id.is_string() ? id.get<std::string>() : id.dump(); }

DatasetRecord parse_record(const json& j, DatasetSchema schema) {
  if (!j.is_object()) throw DatasetError("record is not a JSON object");
  DatasetRecord r;
  if (!j.contains("id")) throw DatasetError("missing field 'id'");
  r.instance_id = id_string(j.at("id"));
  if (r.instance_id.empty()) throw DatasetError("empty id");
  if (!j.contains("question") || !j.at("question").is_string()) {
    throw DatasetError("missing field 'question'");
  }
  r.question = j.at("question").get<std::string>();
  if (r.question.empty()) throw DatasetError("empty question");

  const bool has_options = j.contains("options");
  const bool multiple_choice = schema == DatasetSchema::kMultipleChoice ||
                               (schema == DatasetSchema::kAuto && has_options);
  if (multiple_choice) {
    if (!has_options || !j.at("options").is_array()) throw DatasetError("missing field 'options'");
    r.options = j.at("options").get<std::vector<std::string>>();
    if (r.options.size() < 2 || r.options.size() > 26) {
      throw DatasetError("multiple-choice record needs 2..26 options");
    }
    if (!j.contains("answer")) throw DatasetError("missing field 'answer'");
    const json& a = j.at("answer");
    std::size_t gold = 0;
    if (a.is_number_integer()) {
      const auto v = a.get<std::int64_t>();
      if (v < 0) throw DatasetError("gold option out of range");
      gold = static_cast<std::size_t>(v);
    } else if (a.is_string() && a.get<std::string>().size() == 1 &&
               std::isalpha(static_cast<unsigned char>(a.get<std::string>()[0]))) {
      gold = static_cast<std::size_t>(
          std::toupper(static_cast<unsigned char>(a.get<std::string>()[0])) - 'A');
    } else {
      throw DatasetError("'answer' must be an option letter or index");
    }
    if (gold >= r.options.size()) throw DatasetError("gold option out of range");
    r.gold_option = gold;
    r.references = {r.options[gold]};
    return r;
  }

  const char* field = j.contains("answers") ? "answers" : "references";
  if (!j.contains(field) || !j.at(field).is_array()) {
    throw DatasetError("missing field 'answers'");
  }
  for (const auto& ref : j.at(field)) {
    if (!ref.is_string()) throw DatasetError("reference answers must be strings");
    if (!ref.get<std::string>().empty()) r.references.push_back(ref.get<std::string>());
  }
  if (r.references.empty()) throw DatasetError("record has no reference answers");
  return r;
}

}  // namespace

std::vector<DatasetRecord> parse_dataset(std::istream& in, const std::string& source,
                                         DatasetSchema schema) {
  std::vector<DatasetRecord> out;
  std::map<std::string, std::size_t> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    try {
      DatasetRecord r = parse_record(json::parse(line), schema);
      if (auto [it, inserted] = seen.emplace(r.instance_id, line_no); !inserted) {
        throw DatasetError("duplicate id '" + r.instance_id + "' (first on line " +
                           std::to_string(it->second) + ")");
      }
      out.push_back(std::move(r));
    } catch (const DatasetError& e) {
      throw DatasetError(where + e.what());
    } catch (const json::exception& e) {
      throw DatasetError(where + e.what());
    }
  }
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.instance_id < b.instance_id; });
  return out;
}

std::vector<DatasetRecord> load_dataset(const std::string& path, DatasetSchema schema) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open dataset " + path);
  return parse_dataset(in, path, schema);
}

std::string query_text(const DatasetRecord& record) {
  if (record.options.empty()) return record.question;
  std::string q = record.question;
  for (std::size_t i = 0; i < record.options.size(); ++i) {
    q += "\n";
    q.push_back(static_cast<char>('A' + i));
    q += ". " + record.options[i];
  }
  return q;
}

std::vector<ScoringInstance> scoring_instances(std::span<const DatasetRecord> records) {
  std::vector<ScoringInstance> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({r.instance_id, query_text(r), r.references});
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

std::optional<std::size_t> extract_option_letter(const std::string& text,
                                                 std::size_t num_options) {
  auto is_alnum = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c < 'A' || c > 'Z') continue;
    const auto idx = static_cast<std::size_t>(c - 'A');
    if (idx >= num_options) continue;
    const bool left_ok = i == 0 || !is_alnum(text[i - 1]);
    const bool right_ok = i + 1 == text.size() || !is_alnum(text[i + 1]);
    // "I" and "A" open ordinary sentences; require a marker for them unless
    // the reply is just the letter.
    if (left_ok && right_ok) {
      const bool marked = (i > 0 && text[i - 1] == '(') ||
                          (i + 1 < text.size() && (text[i + 1] == ')' || text[i + 1] == '.' ||
                                                   text[i + 1] == ':')) ||
                          i + 1 == text.size();
      if ((c != 'A' && c != 'I') || marked) return idx;
    }
  }
  std::string trimmed;
  for (char c : text) {
    if (!std::isspace(static_cast<unsigned char>(c)) && c != '.' && c != '(' && c != ')') {
      trimmed.push_back(c);
    }
  }
  if (trimmed.size() == 1 && std::isalpha(static_cast<unsigned char>(trimmed[0]))) {
    const auto idx =
        static_cast<std::size_t>(std::toupper(static_cast<unsigned char>(trimmed[0])) - 'A');
    if (idx < num_options) return idx;
  }
  return std::nullopt;
}

std::vector<double> AggregateMetrics::headline() const {
  std::vector<double> out;
  out.reserve(per_instance.size());
  for (const auto& m : per_instance) {
    out.push_back(task_type == TaskType::kMultipleChoice ? m.correct : m.rouge1);
  }
  return out;
}

AggregateMetrics evaluate(std::span<const GenerationResult> results,
                          std::span<const DatasetRecord> records, TaskType task_type) {
  std::map<std::string, const DatasetRecord*> by_id;
  for (const auto& r : records) by_id[r.instance_id] = &r;
  std::map<std::string, const GenerationResult*> result_by_id;
  for (const auto& res : results) {
    if (!by_id.count(res.instance_id)) {
      throw DatasetError("result for unknown instance '" + res.instance_id + "'");
    }
    if (!result_by_id.emplace(res.instance_id, &res).second) {
      throw DatasetError("duplicate result for instance '" + res.instance_id + "'");
    }
  }
  if (result_by_id.size() != by_id.size()) {
    for (const auto& [id, rec] : by_id) {
      if (!result_by_id.count(id)) throw DatasetError("no result for instance '" + id + "'");
    }
  }

  AggregateMetrics agg;
  agg.task_type = task_type;
  agg.n = result_by_id.size();
  for (const auto& [id, res] : result_by_id) {
    const DatasetRecord& rec = *by_id.at(id);
    InstanceMetrics m;
    m.instance_id = id;
    const std::string text = res->ok() ? res->text : std::string();
    if (task_type == TaskType::kMultipleChoice) {
      if (!rec.gold_option) throw DatasetError("instance '" + id + "' has no gold option");
      const auto picked = extract_option_letter(text, rec.options.size());
      m.correct = picked && *picked == *rec.gold_option ? 1.0 : 0.0;
    } else {
      const TokenSequence pred = tokenize(text);
      for (const auto& ref_text : rec.references) {
        const TokenSequence ref = tokenize(ref_text);
        m.rouge1 = std::max(m.rouge1, rouge1(pred, ref).value);
        m.bleu4 = std::max(m.bleu4, bleu4(pred, std::span<const TokenSequence>(&ref, 1)).value);
      }
    }
    agg.rouge1 += m.rouge1;
    agg.bleu4 += m.bleu4;
    agg.accuracy += m.correct;
    agg.per_instance.push_back(std::move(m));
  }
  if (agg.n > 0) {
    const double n = static_cast<double>(agg.n);
    agg.rouge1 /= n;
    agg.bleu4 /= n;
    agg.accuracy /= n;
  }
  return agg;
}

namespace {

double mean_latency(std::span<const GenerationResult> results) {
  double sum = 0.0;
  for (const auto& r : results) sum += r.latency_ms;
  return results.empty() ? 0.0 : sum / static_cast<double>(results.size());
}

}  // namespace

double measure_speedup(std::span<const GenerationResult> baseline,
                       std::span<const GenerationResult> selective) {
  std::vector<std::string> a, b;
  for (const auto& r : baseline) a.push_back(r.instance_id);
  for (const auto& r : selective) b.push_back(r.instance_id);
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a != b) throw std::invalid_argument("speedup needs identical instance sets");
  if (a.empty()) throw std::invalid_argument("speedup of empty runs");
  const double sel = mean_latency(selective);
  if (!(sel > 0.0)) throw std::invalid_argument("selective run has zero mean latency");
  return mean_latency(baseline) / sel;
}

SignificanceResult significance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("paired samples differ in length");
  if (a.size() < 2) throw std::invalid_argument("paired t-test needs n >= 2");
  const std::size_t n = a.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double x : d) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));

  SignificanceResult out;
  out.dof = n - 1;
  out.mean_difference = mean;
  if (sd == 0.0) {
    out.zero_variance = true;
    out.p_value = mean == 0.0 ? 1.0 : 0.0;
    out.t_statistic = mean == 0.0 ? 0.0 : std::copysign(INFINITY, mean);
    return out;
  }
  out.t_statistic = mean / (sd / std::sqrt(static_cast<double>(n)));
  const boost::math::students_t dist(static_cast<double>(out.dof));
  out.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(out.t_statistic)));
  out.p_value = std::clamp(out.p_value, 0.0, 1.0);
  return out;
}

// ---------------------------------------------------------------------------
// Ablations
// ---------------------------------------------------------------------------

std::vector<ScatterRow> emit_scatter(std::span<const InstanceScore> scores, ScatterVariant variant,
                                     double denom_floor) {
  std::vector<ScatterRow> rows;
  rows.reserve(scores.size());
  for (const auto& s : scores) {
    ScatterRow row;
    row.instance_id = s.instance_id;
    row.full = gece(s.gece.components, denom_floor).value;
    row.ablated = gece_numerator(s.gece.components);
    row.value = variant == ScatterVariant::kFull ? row.full : row.ablated;
    row.route = s.route;
    rows.push_back(std::move(row));
  }
  return rows;
}

ScoringOptions ablation_metric_swap(AgreementMetric metric, ScoringOptions base) {
  base.metric = metric;
  return base;
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

RunMode parse_run_mode(const std::string& s) {
  if (s == "always_retrieve") return RunMode::kAlwaysRetrieve;
  if (s == "selective") return RunMode::kSelective;
  if (s == "compare") return RunMode::kCompare;
  throw std::invalid_argument("unknown mode '" + s + "'");
}

std::string to_string(RunMode m) {
  switch (m) {
    case RunMode::kAlwaysRetrieve:
      return "always_retrieve";
    case RunMode::kSelective:
      return "selective";
    case RunMode::kCompare:
      return "compare";
  }
  return "unknown";
}

void RunConfig::validate() const {
  if (dataset_path.empty()) throw ConfigError("run.dataset is required");
  if (k == 0) throw ConfigError("run.k must be positive");
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("run.fraction must lie in (0, 1)");
  if (runs == 0) throw ConfigError("run.runs must be positive");
  if (parallelism == 0) throw ConfigError("run.parallelism must be positive");
  if (!(denom_floor > 0.0)) throw ConfigError("run.denom_floor must be positive");
  if (freq_table.empty()) throw ConfigError("providers.freq_table is required");
  if (gradients_file.empty() && gradient_url.empty()) {
    throw ConfigError("one of providers.gradients_file or providers.gradient_url is required");
  }
  if (backend != "simulated" && backend != "http") {
    throw ConfigError("providers.backend must be 'simulated' or 'http'");
  }
  if (backend == "http" && (generator_url.empty() || retriever_url.empty())) {
    throw ConfigError("http backend needs providers.generator_url and providers.retriever_url");
  }
  if (fixture_mode != FixtureMode::kPassthrough && fixtures.empty()) {
    throw ConfigError("providers.fixture_mode needs providers.fixtures");
  }
  try {
    request_template.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("generation: ") + e.what());
  }
}

RunConfig load_run_config(const ConfigFile& f) {
  f.reject_unknown({
      "run.dataset", "run.schema", "run.k", "run.fraction", "run.mode", "run.seed", "run.runs",
      "run.parallelism", "run.metric", "run.denom_floor", "run.doc_budget",
      "generation.temperature", "generation.top_p", "generation.max_tokens",
      "providers.backend", "providers.generator_url", "providers.generator_path",
      "providers.retriever_url", "providers.retriever_path", "providers.gradient_url",
      "providers.gradients_file", "providers.freq_table", "providers.fixtures",
      "providers.fixture_mode", "providers.auth_token_env", "providers.attempts",
      "providers.backoff_ms", "providers.timeout_ms",
      "simulated.generation_ms_per_token", "simulated.retrieval_ms", "simulated.answers",
      "simulated.corpus", "simulated.docs_per_query", "simulated.doc_tokens",
  });
  auto non_negative = [&](const std::string& key, std::int64_t fallback) {
    const auto v = f.get_int(key, fallback);
    if (v < 0) throw ConfigError(f.source() + ": '" + key + "' must be >= 0");
    return static_cast<std::size_t>(v);
  };
  RunConfig c;
  c.dataset_path = f.resolve_path(f.get_string("run.dataset", ""));
  c.schema = parse_dataset_schema(f.get_string("run.schema", "auto"));
  c.k = non_negative("run.k", 10);
  c.fraction = f.get_double("run.fraction", 0.2);
  c.mode = parse_run_mode(f.get_string("run.mode", "compare"));
  c.seed = static_cast<std::uint64_t>(non_negative("run.seed", 0));
  c.runs = non_negative("run.runs", 3);
  c.parallelism = non_negative("run.parallelism", 8);
  c.metric = parse_agreement_metric(f.get_string("run.metric", "meteor"));
  c.denom_floor = f.get_double("run.denom_floor", kDefaultDenomFloor);
  c.doc_budget = non_negative("run.doc_budget", kDefaultDocTokenBudget);

  c.request_template.temperature = f.get_double("generation.temperature", 0.6);
  c.request_template.top_p = f.get_double("generation.top_p", 0.9);
  c.request_template.max_tokens = static_cast<int>(f.get_int("generation.max_tokens", 64));

  c.backend = f.get_string("providers.backend", "simulated");
  c.generator_url = f.get_string("providers.generator_url", "");
  c.generator_path = f.get_string("providers.generator_path", "/v1/completions");
  c.retriever_url = f.get_string("providers.retriever_url", "");
  c.retriever_path = f.get_string("providers.retriever_path", "/retrieve");
  c.gradient_url = f.get_string("providers.gradient_url", "");
  c.gradients_file = f.resolve_path(f.get_string("providers.gradients_file", ""));
  c.freq_table = f.resolve_path(f.get_string("providers.freq_table", ""));
  c.fixtures = f.resolve_path(f.get_string("providers.fixtures", ""));
  c.fixture_mode = parse_fixture_mode(
      f.get_string("providers.fixture_mode", c.fixtures.empty() ? "passthrough" : "replay"));
  c.auth_token_env = f.get_string("providers.auth_token_env", "GECE_AUTH_TOKEN");
  c.attempts = static_cast<int>(f.get_int("providers.attempts", 3));
  c.backoff_ms = static_cast<int>(f.get_int("providers.backoff_ms", 250));
  c.timeout_ms = static_cast<int>(f.get_int("providers.timeout_ms", 60000));

  c.sim_generation_ms_per_token = f.get_double("simulated.generation_ms_per_token", 1.0);
  c.sim_retrieval_ms = f.get_double("simulated.retrieval_ms", 400.0);
  c.sim_answers = f.resolve_path(f.get_string("simulated.answers", ""));
  c.sim_corpus = f.resolve_path(f.get_string("simulated.corpus", ""));
  c.sim_docs_per_query = non_negative("simulated.docs_per_query", 20);
  c.sim_doc_tokens = non_negative("simulated.doc_tokens", 50);
  return c;
}

json to_json(const RunConfig& c) {
  return json{
      {"dataset", c.dataset_path},
      {"k", c.k},
      {"fraction", c.fraction},
      {"mode", to_string(c.mode)},
      {"seed", c.seed},
      {"runs", c.runs},
      {"metric", to_string(c.metric)},
      {"denom_floor", c.denom_floor},
      {"doc_budget", c.doc_budget},
      {"temperature", c.request_template.temperature},
      {"top_p", c.request_template.top_p},
      {"max_tokens", c.request_template.max_tokens},
      {"backend", c.backend},
      {"fixture_mode", to_string(c.fixture_mode)},
  };
}

// ---------------------------------------------------------------------------
// Providers
// ---------------------------------------------------------------------------

namespace {

std::vector<json> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path);
  std::vector<json> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw LoadError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

ProviderSet build_providers(const RunConfig& config) {
  config.validate();
  ProviderSet p;
  p.freq_table = load_word_frequency_table(config.freq_table);
  p.call_log = std::make_shared<CallLog>();

  RetryPolicy retry;
  retry.attempts = config.attempts;
  retry.initial_backoff = std::chrono::milliseconds(config.backoff_ms);
  std::string token;
  if (const char* env = std::getenv(config.auth_token_env.c_str())) token = env;
  auto endpoint = [&](const std::string& url, const std::string& path) {
    return HttpEndpoint{url, path, token, std::chrono::milliseconds(config.timeout_ms)};
  };

  if (!config.gradients_file.empty()) {
    GradientFile g = load_gradients(config.gradients_file);
    p.gradients = std::make_shared<StaticGradientSource>(std::move(g.mean), std::move(g.per_instance));
  } else {
    p.gradients = std::make_shared<HttpGradientSource>(endpoint(config.gradient_url, "/gradient"),
                                                       std::to_string(config.seed),
                                                       make_http_transport(), retry);
  }

  std::shared_ptr<Generator> generator;
  std::shared_ptr<Retriever> retriever;
  if (config.backend == "http") {
    auto transport = make_http_transport();
    generator = std::make_shared<HttpGenerator>(
        endpoint(config.generator_url, config.generator_path), transport, retry);
    retriever = std::make_shared<HttpRetriever>(
        endpoint(config.retriever_url, config.retriever_path), transport, retry);
  } else {
    SimulatedLatency latency{config.sim_generation_ms_per_token, config.sim_retrieval_ms};
    std::map<std::string, std::string> answers;
    std::set<std::string> known;
    if (!config.sim_answers.empty()) {
      for (const auto& j : read_jsonl(config.sim_answers)) {
        const auto q = j.at("question").get<std::string>();
        answers[q] = j.at("answer").get<std::string>();
        if (j.value("known", false)) known.insert(q);
      }
    }
    std::map<std::string, std::vector<RetrievedDoc>> corpus;
    if (!config.sim_corpus.empty()) {
      for (const auto& j : read_jsonl(config.sim_corpus)) {
        corpus[j.at("query").get<std::string>()] = parse_retrieval_body(j);
      }
    }
    generator = std::make_shared<SimulatedGenerator>(latency, config.seed, std::move(answers),
                                                     std::move(known));
    retriever = std::make_shared<SimulatedRetriever>(latency, std::move(corpus),
                                                     config.sim_docs_per_query,
                                                     config.sim_doc_tokens);
  }

  if (!config.fixtures.empty() && config.fixture_mode != FixtureMode::kPassthrough) {
    p.fixtures = std::make_shared<FixtureStore>(config.fixtures, config.fixture_mode);
    generator = std::make_shared<FixtureGenerator>(p.fixtures, generator);
    retriever = std::make_shared<FixtureRetriever>(p.fixtures, retriever);
  }
  p.generator = std::move(generator);
  p.retriever = std::make_shared<LoggingRetriever>(std::move(retriever), p.call_log);
  return p;
}

// ---------------------------------------------------------------------------
// Driver
// ---------------------------------------------------------------------------

namespace {

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

RunReport run_experiment(const RunConfig& config, ProviderSet& providers) {
  config.validate();
  RunReport report;
  report.config = config;
  const auto records = load_dataset(config.dataset_path, config.schema);
  if (records.empty()) throw DatasetError("dataset " + config.dataset_path + " is empty");
  const TaskType task = records.front().task_type();
  for (const auto& r : records) {
    if (r.task_type() != task) throw DatasetError("dataset mixes open QA and multiple choice");
  }

  ScoringOptions scoring;
  scoring.metric = config.metric;
  scoring.denom_floor = config.denom_floor;
  scoring.parallelism = config.parallelism;
  scoring.request_template = config.request_template;
  const auto instances = scoring_instances(records);
  report.scores = score_corpus(instances, *providers.generator, *providers.gradients,
                               providers.freq_table, scoring);
  if (report.scores.scores.empty()) throw DatasetError("no instance could be scored");
  report.selection = assign_routes(report.scores.scores, ThresholdPolicy{config.fraction});

  std::map<std::string, Route> routes;
  for (const auto& s : report.scores.scores) routes[s.instance_id] = s.route;

  BatchConfig batch;
  batch.parallelism = config.parallelism;
  batch.answer.k = config.k;
  batch.answer.doc_budget = config.doc_budget;
  batch.answer.request_template = config.request_template;

  auto make_queries = [&](bool selective) {
    std::vector<Query> qs;
    qs.reserve(records.size());
    for (const auto& r : records) {
      Query q{r.instance_id, query_text(r), Route::kLongTail, r.task_type()};
      // Instances that failed scoring fall back to retrieval.
      if (selective) {
        auto it = routes.find(r.instance_id);
        q.route = it == routes.end() ? Route::kLongTail : it->second;
      }
      qs.push_back(std::move(q));
    }
    return qs;
  };

  std::vector<std::pair<std::string, bool>> passes;
  if (config.mode != RunMode::kSelective) passes.emplace_back("always_retrieve", false);
  if (config.mode != RunMode::kAlwaysRetrieve) passes.emplace_back("selective", true);

  for (const auto& [name, selective] : passes) {
    PassSummary pass;
    pass.name = name;
    const auto queries = make_queries(selective);
    for (std::size_t run = 0; run < config.runs; ++run) {
      BatchResult br = run_batch(queries, *providers.generator, *providers.retriever, batch);
      AggregateMetrics m = evaluate(br.results, records, task);
      const double lat = br.timing.total_ms() / static_cast<double>(br.results.size());
      pass.headline_per_run.push_back(task == TaskType::kMultipleChoice ? m.accuracy : m.rouge1);
      pass.latency_per_run.push_back(lat);
      if (run == 0) {
        pass.metrics = std::move(m);
        pass.mean_latency_ms = lat;
        pass.results = std::move(br.results);
      }
    }
    report.passes.push_back(std::move(pass));
  }

  if (report.passes.size() == 2) {
    const auto& base = report.passes[0];
    const auto& sel = report.passes[1];
    const double sel_lat = mean_of(sel.latency_per_run);
    if (sel_lat > 0.0) report.speedup = mean_of(base.latency_per_run) / sel_lat;
    const auto a = sel.metrics.headline();
    const auto b = base.metrics.headline();
    if (a.size() >= 2) report.significance = significance(a, b);
  }
  return report;
}

json to_json(const RunReport& r) {
  json j;
  j["config"] = to_json(r.config);
  j["detection"] = {{"threshold", r.selection.threshold},
                    {"long_tail_count", r.selection.count},
                    {"scored", r.scores.scores.size()},
                    {"fraction", r.selection.fraction}};
  json failures = json::array();
  for (const auto& f : r.scores.failures) {
    failures.push_back({{"instance_id", f.instance_id}, {"error", f.message}});
  }
  j["detection"]["failures"] = failures;
  json scores = json::array();
  for (const auto& s : r.scores.scores) scores.push_back(to_json(s));
  j["scores"] = scores;

  json passes = json::array();
  for (const auto& p : r.passes) {
    json results = json::array();
    for (const auto& res : p.results) results.push_back(to_json(res));
    json pass{{"name", p.name},
              {"n", p.metrics.n},
              {"rouge1", p.metrics.rouge1},
              {"bleu4", p.metrics.bleu4},
              {"accuracy", p.metrics.accuracy},
              {"headline_mean", mean_of(p.headline_per_run)},
              {"headline_std", std_of(p.headline_per_run)},
              {"mean_latency_ms", mean_of(p.latency_per_run)},
              {"latency_std_ms", std_of(p.latency_per_run)},
              {"results", results}};
    passes.push_back(std::move(pass));
  }
  j["passes"] = passes;
  j["speedup"] = r.speedup ? json(*r.speedup) : json(nullptr);
  if (r.significance) {
    j["significance"] = {{"p_value", r.significance->p_value},
                         {"t_statistic", std::isfinite(r.significance->t_statistic)
                                             ? json(r.significance->t_statistic)
                                             : json(nullptr)},
                         {"dof", r.significance->dof},
                         {"mean_difference", r.significance->mean_difference},
                         {"zero_variance", r.significance->zero_variance},
                         {"significant_at_0_05", r.significance->p_value < 0.05}};
  } else {
    j["significance"] = nullptr;
  }
  return j;
}

std::string format_report_table(const RunReport& r) {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "threshold %.6g  long-tail %zu/%zu  failures %zu\n",
                r.selection.threshold, r.selection.count, r.scores.scores.size(),
                r.scores.failures.size());
  out << buf;
  std::snprintf(buf, sizeof(buf), "%-16s %8s %8s %8s %10s %14s\n", "pass", "n", "rouge1", "bleu4",
                "accuracy", "latency_ms");
  out << buf;
  for (const auto& p : r.passes) {
    std::snprintf(buf, sizeof(buf), "%-16s %8zu %8.4f %8.4f %10.4f %14.2f\n", p.name.c_str(),
                  p.metrics.n, p.metrics.rouge1, p.metrics.bleu4, p.metrics.accuracy,
                  mean_of(p.latency_per_run));
    out << buf;
  }
  if (r.speedup) {
    std::snprintf(buf, sizeof(buf), "speedup %.2fx\n", *r.speedup);
    out << buf;
  }
  if (r.significance) {
    std::snprintf(buf, sizeof(buf), "paired t-test p = %.4g%s\n", r.significance->p_value,
                  r.significance->zero_variance ? " (zero variance)" : "");
    out << buf;
  }
  return out.str();
}

}  // namespace gece
