// gece: score corpora, detect long-tail instances and run selective RAG
// experiments from the command line.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "gece/harness.hpp"

using namespace gece;

namespace {

struct Overrides {
  std::string config;
  std::string dataset;
  std::optional<std::size_t> k;
  std::optional<double> fraction;
  std::string mode;
  std::string fixtures;
  std::string fixture_mode;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> runs;
  std::string metric;
};

void add_run_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "TOML run configuration");
  cmd->add_option("--dataset", o.dataset, "dataset JSONL (overrides run.dataset)");
  cmd->add_option("--k", o.k, "documents retrieved per long-tail query")->check(CLI::PositiveNumber);
  cmd->add_option("--fraction", o.fraction, "fraction of instances labeled long tail")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--mode", o.mode, "always_retrieve | selective | compare");
  cmd->add_option("--fixtures", o.fixtures, "fixture JSONL for record/replay");
  cmd->add_option("--fixture-mode", o.fixture_mode, "record | replay | passthrough");
  cmd->add_option("--seed", o.seed, "seed for simulated providers");
  cmd->add_option("--runs", o.runs, "repetitions per pass")->check(CLI::PositiveNumber);
  cmd->add_option("--metric", o.metric, "agreement metric: meteor | chrf | ter");
}

RunConfig resolve_config(const Overrides& o) {
  ConfigFile file;
  if (!o.config.empty()) file = ConfigFile::load(o.config);
  RunConfig c = load_run_config(file);
  if (!o.dataset.empty()) c.dataset_path = o.dataset;
  if (o.k) c.k = *o.k;
  if (o.fraction) c.fraction = *o.fraction;
  if (!o.mode.empty()) c.mode = parse_run_mode(o.mode);
  if (!o.fixtures.empty()) {
    c.fixtures = o.fixtures;
    if (o.fixture_mode.empty() && c.fixture_mode == FixtureMode::kPassthrough) {
      c.fixture_mode = FixtureMode::kReplay;
    }
  }
  if (!o.fixture_mode.empty()) c.fixture_mode = parse_fixture_mode(o.fixture_mode);
  if (o.seed) c.seed = *o.seed;
  if (o.runs) c.runs = *o.runs;
  if (!o.metric.empty()) c.metric = parse_agreement_metric(o.metric);
  c.validate();
  return c;
}

// JSON goes to --out when given (the table then goes to stdout), otherwise
// to stdout with the table on stderr.
void emit(const std::string& out_path, const std::string& payload, const std::string& table) {
  if (out_path.empty()) {
    std::cout << payload;
    std::cerr << table;
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + out_path);
  out << payload;
  std::cout << table;
}

std::vector<InstanceScore> read_scores(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scores file " + path);
  std::vector<InstanceScore> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(instance_score_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::string scores_jsonl(const std::vector<InstanceScore>& scores) {
  std::string s;
  for (const auto& x : scores) s += to_json(x).dump() + "\n";
  return s;
}

std::string scores_table(const std::vector<InstanceScore>& scores) {
  std::string s;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-20s %14s %8s %8s %12s %10s\n", "instance", "gece", "agree",
                "prob", "dot", "route");
  s += buf;
  for (const auto& x : scores) {
    std::snprintf(buf, sizeof(buf), "%-20s %14.6g %8.4f %8.4f %12.6g %10s%s\n",
                  x.instance_id.c_str(), x.gece.value, x.gece.components.agreement,
                  x.gece.components.mean_token_prob, x.gece.components.gradient_dot,
                  to_string(x.route).c_str(), x.gece.denominator_floored ? " *" : "");
    s += buf;
  }
  return s;
}

int cmd_score(const Overrides& o, const std::string& out) {
  RunConfig c = resolve_config(o);
  ProviderSet p = build_providers(c);
  const auto records = load_dataset(c.dataset_path, c.schema);
  ScoringOptions opt;
  opt.metric = c.metric;
  opt.denom_floor = c.denom_floor;
  opt.parallelism = c.parallelism;
  opt.request_template = c.request_template;
  const auto scored = score_corpus(scoring_instances(records), *p.generator, *p.gradients,
                                   p.freq_table, opt);
  for (const auto& f : scored.failures) {
    std::cerr << "warning: " << f.instance_id << ": " << f.message << "\n";
  }
  emit(out, scores_jsonl(scored.scores), scores_table(scored.scores));
  return scored.scores.empty() ? 1 : 0;
}

int cmd_detect(const std::string& scores_path, double fraction, std::optional<double> threshold,
               const std::string& out) {
  auto scores = read_scores(scores_path);
  json j;
  if (threshold) {
    for (auto& s : scores) s.route = classify(s.instance_id, s.gece, *threshold);
    j["threshold"] = *threshold;
    j["frozen"] = true;
  } else {
    const Selection sel = assign_routes(scores, ThresholdPolicy{fraction});
    j = to_json(sel);
    j["frozen"] = false;
  }
  json rows = json::array();
  for (const auto& s : scores) rows.push_back(to_json(s));
  j["scores"] = rows;
  emit(out, j.dump(2) + "\n", scores_table(scores));
  return 0;
}

int cmd_run(const Overrides& o, const std::string& out) {
  RunConfig c = resolve_config(o);
  ProviderSet p = build_providers(c);
  const RunReport report = run_experiment(c, p);
  emit(out, to_json(report).dump(2) + "\n", format_report_table(report));
  return 0;
}

int cmd_record(Overrides o, const std::string& out) {
  if (o.fixtures.empty() && o.config.empty()) throw std::runtime_error("--fixtures is required");
  o.fixture_mode = "record";
  RunConfig c = resolve_config(o);
  if (c.fixtures.empty()) throw std::runtime_error("--fixtures is required");
  ProviderSet p = build_providers(c);
  const RunReport report = run_experiment(c, p);
  std::cout << "recorded " << p.fixtures->size() << " responses to " << c.fixtures << "\n";
  if (!out.empty()) emit(out, to_json(report).dump(2) + "\n", "");
  return 0;
}

int cmd_eval(const std::string& results_path, const std::string& dataset, const std::string& out) {
  const auto records = load_dataset(dataset);
  if (records.empty()) throw std::runtime_error("dataset is empty");
  std::ifstream in(results_path);
  if (!in) throw std::runtime_error("cannot open results file " + results_path);
  std::vector<GenerationResult> results;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    results.push_back(generation_result_from_json(json::parse(line)));
  }
  const TaskType task = records.front().task_type();
  const AggregateMetrics m = evaluate(results, records, task);
  double latency = 0.0;
  for (const auto& r : results) latency += r.latency_ms;
  latency /= results.empty() ? 1.0 : static_cast<double>(results.size());

  json j{{"task_type", to_string(task)}, {"n", m.n},           {"rouge1", m.rouge1},
         {"bleu4", m.bleu4},             {"accuracy", m.accuracy}, {"mean_latency_ms", latency}};
  json per = json::array();
  for (const auto& x : m.per_instance) {
    per.push_back({{"instance_id", x.instance_id},
                   {"rouge1", x.rouge1},
                   {"bleu4", x.bleu4},
                   {"correct", x.correct}});
  }
  j["per_instance"] = per;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "n %zu  rouge1 %.4f  bleu4 %.4f  accuracy %.4f  latency %.2f ms\n",
                m.n, m.rouge1, m.bleu4, m.accuracy, latency);
  emit(out, j.dump(2) + "\n", buf);
  return 0;
}

int cmd_scatter(const std::string& scores_path, const std::string& variant, const std::string& out) {
  const auto scores = read_scores(scores_path);
  ScatterVariant v;
  if (variant == "full") {
    v = ScatterVariant::kFull;
  } else if (variant == "no_stats_semantics") {
    v = ScatterVariant::kNoStatsSemantics;
  } else {
    throw std::invalid_argument("unknown scatter variant '" + variant + "'");
  }
  std::string tsv = "instance_id\tvalue\tfull\tablated\troute\n";
  char buf[128];
  for (const auto& r : emit_scatter(scores, v)) {
    std::snprintf(buf, sizeof(buf), "\t%.17g\t%.17g\t%.17g\t", r.value, r.full, r.ablated);
    tsv += r.instance_id + buf + to_string(r.route) + "\n";
  }
  if (out.empty()) {
    std::cout << tsv;
  } else {
    std::ofstream f(out, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + out);
    f << tsv;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GECE long-tail detection and selective retrieval"};
  app.require_subcommand(1);

  Overrides score_o, run_o, record_o;
  std::string score_out, run_out, record_out, detect_out, eval_out, scatter_out;

  auto* score = app.add_subcommand("score", "score a dataset, writing InstanceScore JSONL");
  add_run_flags(score, score_o);
  score->add_option("--out", score_out, "output JSONL");

  auto* detect = app.add_subcommand("detect", "threshold scores and assign routes");
  std::string detect_scores;
  double detect_fraction = 0.2;
  std::optional<double> detect_threshold;
  detect->add_option("--scores", detect_scores, "InstanceScore JSONL")->required();
  detect->add_option("--fraction", detect_fraction, "fraction labeled long tail")
      ->check(CLI::Range(0.0, 1.0));
  detect->add_option("--threshold", detect_threshold, "apply a frozen threshold instead");
  detect->add_option("--out", detect_out, "output JSON");

  auto* run = app.add_subcommand("run", "end-to-end experiment");
  add_run_flags(run, run_o);
  run->add_option("--out", run_out, "output JSON report");

  auto* eval = app.add_subcommand("eval", "evaluate generation results against a dataset");
  std::string eval_results, eval_dataset;
  eval->add_option("--results", eval_results, "GenerationResult JSONL")->required();
  eval->add_option("--dataset", eval_dataset, "dataset JSONL")->required();
  eval->add_option("--out", eval_out, "output JSON");

  auto* scatter = app.add_subcommand("scatter", "full vs numerator-only GECE table");
  std::string scatter_scores, scatter_variant = "full";
  scatter->add_option("--scores", scatter_scores, "InstanceScore JSONL")->required();
  scatter->add_option("--variant", scatter_variant, "full | no_stats_semantics");
  scatter->add_option("--out", scatter_out, "output TSV");

  auto* record = app.add_subcommand("record-fixtures", "run live providers and record fixtures");
  add_run_flags(record, record_o);
  record->add_option("--out", record_out, "optional JSON report");

  CLI11_PARSE(app, argc, argv);

  try {
    if (score->parsed()) return cmd_score(score_o, score_out);
    if (detect->parsed()) return cmd_detect(detect_scores, detect_fraction, detect_threshold, detect_out);
    if (run->parsed()) return cmd_run(run_o, run_out);
    if (eval->parsed()) return cmd_eval(eval_results, eval_dataset, eval_out);
    if (scatter->parsed()) return cmd_scatter(scatter_scores, scatter_variant, scatter_out);
    if (record->parsed()) return cmd_record(record_o, record_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
