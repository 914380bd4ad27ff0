#include "gece/longtail.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace gece {

std::string to_string(Route r) { return r == Route::kLongTail ? "long_tail" : "common"; }

Route parse_route(const std::string& s) {
  if (s == "long_tail") return Route::kLongTail;
  if (s == "common") return Route::kCommon;
  throw std::invalid_argument("unknown route '" + s + "'");
}

std::string to_string(AgreementMetric m) {
  switch (m) {
    case AgreementMetric::kMeteor:
      return "meteor";
    case AgreementMetric::kChrf:
      return "chrf";
    case AgreementMetric::kTer:
      return "ter";
  }
  return "unknown";
}

AgreementMetric parse_agreement_metric(const std::string& s) {
  if (s == "meteor") return AgreementMetric::kMeteor;
  if (s == "chrf") return AgreementMetric::kChrf;
  if (s == "ter") return AgreementMetric::kTer;
  throw std::invalid_argument("unknown agreement metric '" + s + "'");
}

double agreement_score(AgreementMetric metric, const std::string& pred,
                       std::span<const std::string> refs) {
  if (refs.empty()) throw MetricError("agreement needs at least one reference");
  const TokenSequence p = tokenize(pred);
  double best = 0.0;
  for (const auto& ref : refs) {
    double v = 0.0;
    switch (metric) {
      case AgreementMetric::kMeteor:
        v = meteor(p, tokenize(ref)).value;
        break;
      case AgreementMetric::kChrf:
        v = chrf(pred, ref).value;
        break;
      case AgreementMetric::kTer: {
        const TokenSequence r = tokenize(ref);
        v = r.empty() ? 0.0 : std::max(0.0, 1.0 - ter(p, r).value);
        break;
      }
    }
    best = std::max(best, v);
  }
  return best;
}

json to_json(const InstanceScore& s) {
  return json{{"instance_id", s.instance_id},
              {"gece", s.gece.value},
              {"meteor", s.gece.components.agreement},
              {"mean_prob", s.gece.components.mean_token_prob},
              {"alpha", s.gece.components.alpha},
              {"dot", s.gece.components.gradient_dot},
              {"denominator_floored", s.gece.denominator_floored},
              {"metric", to_string(s.metric)},
              {"route", to_string(s.route)}};
}

InstanceScore instance_score_from_json(const json& j) {
  InstanceScore s;
  s.instance_id = j.at("instance_id").get<std::string>();
  s.gece.value = j.at("gece").get<double>();
  s.gece.components.agreement = j.at("meteor").get<double>();
  s.gece.components.mean_token_prob = j.at("mean_prob").get<double>();
  s.gece.components.alpha = j.at("alpha").get<double>();
  s.gece.components.gradient_dot = j.at("dot").get<double>();
  s.gece.denominator_floored = j.value("denominator_floored", false);
  s.metric = parse_agreement_metric(j.value("metric", "meteor"));
  s.route = parse_route(j.value("route", "common"));
  return s;
}

CorpusScores score_corpus(std::span<const ScoringInstance> instances, Generator& generator,
                          GradientSource& gradients, const WordFrequencyTable& freq_table,
                          const ScoringOptions& options) {
  CorpusScores out;
  if (instances.empty()) return out;
  const GradientVector mean = gradients.mean();

  struct Slot {
    std::optional<InstanceScore> score;
    std::optional<ScoreFailure> failure;
  };
  std::vector<Slot> slots(instances.size());

  auto score_one = [&](const ScoringInstance& inst) -> InstanceScore {
    if (inst.references.empty()) throw MetricError("instance has no reference answer");
    GenerationRequest req = options.request_template;
    req.prompt = assemble_prompt(inst.question, {}, 0, options.prompt_template).prompt_text;
    const GenerationResponse resp = generator.generate(req);

    GeceInputs in;
    in.agreement = agreement_score(options.metric, resp.text, inst.references);
    in.mean_token_prob = mean_token_prob(resp.token_probs);
    in.alpha = avg_word_frequency(tokenize(inst.question), freq_table);
    const GradientVector g =
        gradients.gradient(inst.instance_id, inst.question, inst.references.front());
    in.gradient_dot = gradient_alignment(mean, g);

    InstanceScore s;
    s.instance_id = inst.instance_id;
    s.metric = options.metric;
    s.gece = gece(in, options.denom_floor);
    return s;
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < instances.size(); i = next++) {
      try {
        slots[i].score = score_one(instances[i]);
      } catch (const std::exception& e) {
        slots[i].failure = ScoreFailure{instances[i].instance_id, e.what()};
      }
    }
  };
  const std::size_t n_threads =
      std::clamp<std::size_t>(options.parallelism, 1, instances.size());
  std::vector<std::jthread> pool;
  pool.reserve(n_threads - 1);
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  pool.clear();

  for (auto& s : slots) {
    if (s.score) out.scores.push_back(std::move(*s.score));
    if (s.failure) out.failures.push_back(std::move(*s.failure));
  }
  std::sort(out.scores.begin(), out.scores.end(),
            [](const auto& a, const auto& b) { return a.instance_id < b.instance_id; });
  std::sort(out.failures.begin(), out.failures.end(),
            [](const auto& a, const auto& b) { return a.instance_id < b.instance_id; });
  return out;
}

std::size_t selected_count(std::size_t n, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw std::invalid_argument("fraction must lie in (0, 1)");
  }
  const double raw = fraction * static_cast<double>(n);
  auto count = static_cast<std::size_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw)));
  return std::min(count, n);
}

Selection select_top_fraction(std::span<const InstanceScore> scores, const ThresholdPolicy& policy) {
  if (scores.empty()) throw std::invalid_argument("threshold over an empty score set");
  std::vector<const InstanceScore*> order;
  order.reserve(scores.size());
  for (const auto& s : scores) order.push_back(&s);
  std::sort(order.begin(), order.end(), [](const InstanceScore* a, const InstanceScore* b) {
    if (a->gece.value != b->gece.value) return a->gece.value > b->gece.value;
    return a->instance_id < b->instance_id;
  });

  Selection sel;
  sel.corpus_size = scores.size();
  sel.fraction = policy.fraction;
  sel.count = std::max<std::size_t>(1, selected_count(scores.size(), policy.fraction));
  sel.threshold = order[sel.count - 1]->gece.value;
  for (std::size_t i = 0; i < sel.count; ++i) {
    if (order[i]->gece.value == sel.threshold) sel.tied_selected.insert(order[i]->instance_id);
  }
  return sel;
}

double threshold_top_fraction(std::span<const InstanceScore> scores,
                              const ThresholdPolicy& policy) {
  return select_top_fraction(scores, policy).threshold;
}

Route classify(const std::string& instance_id, const GeceScore& score, double threshold,
               const Selection* tie_context) {
  if (score.value > threshold) return Route::kLongTail;
  if (score.value < threshold) return Route::kCommon;
  if (!tie_context) return Route::kLongTail;
  return tie_context->tied_selected.count(instance_id) ? Route::kLongTail : Route::kCommon;
}

Selection assign_routes(std::vector<InstanceScore>& scores, const ThresholdPolicy& policy) {
  Selection sel = select_top_fraction(scores, policy);
  for (auto& s : scores) s.route = classify(s.instance_id, s.gece, sel.threshold, &sel);
  return sel;
}

json to_json(const Selection& s) {
  return json{{"threshold", s.threshold},
              {"count", s.count},
              {"corpus_size", s.corpus_size},
              {"fraction", s.fraction},
              {"tied_selected", s.tied_selected}};
}

Selection selection_from_json(const json& j) {
  Selection s;
  s.threshold = j.at("threshold").get<double>();
  s.count = j.value("count", std::size_t{0});
  s.corpus_size = j.value("corpus_size", std::size_t{0});
  s.fraction = j.value("fraction", 0.0);
  if (j.contains("tied_selected")) s.tied_selected = j.at("tied_selected").get<std::set<std::string>>();
  return s;
}

}  // namespace gece
