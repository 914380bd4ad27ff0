#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gece/config.hpp"
#include "gece/longtail.hpp"
#include "gece/rag.hpp"

namespace gece {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

enum class DatasetSchema { kAuto, kOpenQa, kMultipleChoice };

DatasetSchema parse_dataset_schema(const std::string& s);

struct DatasetRecord {
  std::string instance_id;
  std::string question;
  std::vector<std::string> references;
  std::vector<std::string> options;   // multiple choice only
  std::optional<std::size_t> gold_option;

  TaskType task_type() const {
    return options.empty() ? TaskType::kOpenQa : TaskType::kMultipleChoice;
  }
};

/// JSONL, one record per line:
///   open QA:         {"id", "question", "answers": [...]}   ("references" also accepted)
///   multiple choice: {"id", "question", "options": [...], "answer": "B" | 1}
/// Records come back sorted by instance_id.
std::vector<DatasetRecord> load_dataset(const std::string& path,
                                        DatasetSchema schema = DatasetSchema::kAuto);
std::vector<DatasetRecord> parse_dataset(std::istream& in, const std::string& source,
                                         DatasetSchema schema = DatasetSchema::kAuto);

/// Text sent to the generator: the question, followed by lettered options
/// for multiple-choice records.
std::string query_text(const DatasetRecord& record);

std::vector<ScoringInstance> scoring_instances(std::span<const DatasetRecord> records);

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// First option letter named in `text`: a standalone uppercase letter within
/// the option range (so "Answer: (B)" -> 1); failing that, a reply that is a
/// single letter in either case. nullopt when nothing matches.
std::optional<std::size_t> extract_option_letter(const std::string& text, std::size_t num_options);

struct InstanceMetrics {
  std::string instance_id;
  double rouge1 = 0.0;
  double bleu4 = 0.0;
  double correct = 0.0;  // multiple choice only
};

struct AggregateMetrics {
  TaskType task_type = TaskType::kOpenQa;
  std::size_t n = 0;
  double rouge1 = 0.0;
  double bleu4 = 0.0;
  double accuracy = 0.0;
  std::vector<InstanceMetrics> per_instance;  // sorted by instance_id

  /// Per-instance values of the headline metric (rouge1 or correctness).
  std::vector<double> headline() const;
};

/// Open QA: mean best-reference ROUGE-1 and BLEU-4. Multiple choice:
/// accuracy of the extracted option letter. Failed generations score 0.
AggregateMetrics evaluate(std::span<const GenerationResult> results,
                          std::span<const DatasetRecord> records, TaskType task_type);

/// Ratio of mean per-instance latency, baseline / selective.
double measure_speedup(std::span<const GenerationResult> baseline,
                       std::span<const GenerationResult> selective);

struct SignificanceResult {
  double p_value = 1.0;
  double t_statistic = 0.0;
  std::size_t dof = 0;
  double mean_difference = 0.0;
  bool zero_variance = false;
};

/// Two-tailed paired t-test on a - b.
SignificanceResult significance(std::span<const double> a, std::span<const double> b);

// ---------------------------------------------------------------------------
// Ablations
// ---------------------------------------------------------------------------

enum class ScatterVariant { kFull, kNoStatsSemantics };

struct ScatterRow {
  std::string instance_id;
  double value = 0.0;  // the requested variant
  double full = 0.0;
  double ablated = 0.0;
  Route route = Route::kCommon;
};

std::vector<ScatterRow> emit_scatter(std::span<const InstanceScore> scores, ScatterVariant variant,
                                     double denom_floor = kDefaultDenomFloor);

ScoringOptions ablation_metric_swap(AgreementMetric metric, ScoringOptions base = {});

// ---------------------------------------------------------------------------
// End-to-end driver
// ---------------------------------------------------------------------------

enum class RunMode { kAlwaysRetrieve, kSelective, kCompare };

RunMode parse_run_mode(const std::string& s);
std::string to_string(RunMode m);

struct RunConfig {
  std::string dataset_path;
  DatasetSchema schema = DatasetSchema::kAuto;
  std::size_t k = 10;
  double fraction = 0.2;
  RunMode mode = RunMode::kCompare;
  std::uint64_t seed = 0;
  std::size_t runs = 3;
  std::size_t parallelism = 8;
  AgreementMetric metric = AgreementMetric::kMeteor;
  double denom_floor = kDefaultDenomFloor;
  std::size_t doc_budget = kDefaultDocTokenBudget;
  GenerationRequest request_template;

  // providers
  std::string backend = "simulated";  // simulated | http
  std::string generator_url;
  std::string generator_path = "/v1/completions";
  std::string retriever_url;
  std::string retriever_path = "/retrieve";
  std::string gradient_url;
  std::string gradients_file;
  std::string freq_table;
  std::string fixtures;
  FixtureMode fixture_mode = FixtureMode::kPassthrough;
  std::string auth_token_env = "GECE_AUTH_TOKEN";
  int attempts = 3;
  int backoff_ms = 250;
  int timeout_ms = 60000;

  // simulated backend
  double sim_generation_ms_per_token = 1.0;
  double sim_retrieval_ms = 400.0;
  std::string sim_answers;
  std::string sim_corpus;
  std::size_t sim_docs_per_query = 20;
  std::size_t sim_doc_tokens = 50;

  void validate() const;
};

/// Reads a config file; relative paths resolve against its directory.
RunConfig load_run_config(const ConfigFile& file);
json to_json(const RunConfig& c);

/// Providers built from a RunConfig (fixture-wrapped when configured).
struct ProviderSet {
  std::shared_ptr<Generator> generator;
  std::shared_ptr<Retriever> retriever;
  std::shared_ptr<GradientSource> gradients;
  std::shared_ptr<CallLog> call_log;
  std::shared_ptr<FixtureStore> fixtures;
  WordFrequencyTable freq_table;
};

ProviderSet build_providers(const RunConfig& config);

struct PassSummary {
  std::string name;  // "always_retrieve" | "selective"
  AggregateMetrics metrics;        // first run
  double mean_latency_ms = 0.0;    // first run
  std::vector<double> headline_per_run;
  std::vector<double> latency_per_run;
  std::vector<GenerationResult> results;  // first run, dataset order
};

struct RunReport {
  RunConfig config;
  CorpusScores scores;
  Selection selection;
  std::vector<PassSummary> passes;
  std::optional<double> speedup;
  std::optional<SignificanceResult> significance;
};

RunReport run_experiment(const RunConfig& config, ProviderSet& providers);

json to_json(const RunReport& r);
/// Fixed-width text table of the report.
std::string format_report_table(const RunReport& r);

}  // namespace gece
