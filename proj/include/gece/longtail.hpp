#pragma once

#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "gece/calibration.hpp"
#include "gece/metrics.hpp"
#include "gece/prompt.hpp"
#include "gece/providers.hpp"

namespace gece {

enum class Route { kCommon, kLongTail };

std::string to_string(Route r);
Route parse_route(const std::string& s);

/// Agreement term of the GECE numerator. TER is turned into a similarity
/// with max(0, 1 - TER).
enum class AgreementMetric { kMeteor, kChrf, kTer };

std::string to_string(AgreementMetric m);
AgreementMetric parse_agreement_metric(const std::string& s);

/// Agreement of `pred` with the best of `refs` under the chosen metric.
double agreement_score(AgreementMetric metric, const std::string& pred,
                       std::span<const std::string> refs);

struct InstanceScore {
  std::string instance_id;
  GeceScore gece;
  Route route = Route::kCommon;
  AgreementMetric metric = AgreementMetric::kMeteor;
};

json to_json(const InstanceScore& s);
InstanceScore instance_score_from_json(const json& j);

struct ScoringInstance {
  std::string instance_id;
  std::string question;
  std::vector<std::string> references;
};

struct ScoreFailure {
  std::string instance_id;
  std::string message;
};

struct ScoringOptions {
  AgreementMetric metric = AgreementMetric::kMeteor;
  double denom_floor = kDefaultDenomFloor;
  std::size_t parallelism = 4;
  PromptTemplate prompt_template;
  GenerationRequest request_template;  // prompt is filled per instance
};

struct CorpusScores {
  std::vector<InstanceScore> scores;   // sorted by instance_id
  std::vector<ScoreFailure> failures;  // sorted by instance_id
};

/// Generates an answer for each bare question (never retrieving), then
/// combines agreement with the references, mean token probability, the
/// average word frequency of the question and the gradient alignment into a
/// GECE score. Per-instance failures are collected; the run continues.
/// Routes are left at kCommon; see assign_routes.
CorpusScores score_corpus(std::span<const ScoringInstance> instances, Generator& generator,
                          GradientSource& gradients, const WordFrequencyTable& freq_table,
                          const ScoringOptions& options = {});

struct ThresholdPolicy {
  double fraction = 0.2;  // (0, 1)
};

/// ceil(fraction * n), computed so that products landing a rounding error
/// above an integer do not round up.
std::size_t selected_count(std::size_t n, double fraction);

/// Outcome of top-fraction selection over one corpus.
struct Selection {
  double threshold = 0.0;
  std::size_t count = 0;
  std::size_t corpus_size = 0;
  double fraction = 0.0;
  /// Instances whose score equals the threshold and which made the quota.
  std::set<std::string> tied_selected;
};

/// Sorts by (gece descending, instance_id ascending) and keeps the first
/// selected_count(N, fraction).
Selection select_top_fraction(std::span<const InstanceScore> scores, const ThresholdPolicy& policy);

/// Smallest GECE value among the selected instances.
double threshold_top_fraction(std::span<const InstanceScore> scores,
                              const ThresholdPolicy& policy);

/// With a tie context from the same corpus: long tail iff strictly above the
/// threshold, or equal to it and among the selected ties. Without one (a
/// frozen threshold applied to new data): long tail iff value >= threshold.
Route classify(const std::string& instance_id, const GeceScore& score, double threshold,
               const Selection* tie_context = nullptr);

/// Selects and writes routes in place. Returns the selection.
Selection assign_routes(std::vector<InstanceScore>& scores, const ThresholdPolicy& policy);

json to_json(const Selection& s);
Selection selection_from_json(const json& j);

}  // namespace gece
