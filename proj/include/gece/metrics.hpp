#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "gece/tokenize.hpp"

namespace gece {

/// Raised for inputs on which a metric is undefined (empty reference for
/// TER, empty probability list, ...).
class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct MetricScore {
  double value = 0.0;
  std::string metric_name;
  double range_low = 0.0;
  double range_high = 1.0;  // +inf for TER
  std::string metadata;
};

// ---------------------------------------------------------------------------
// METEOR
// ---------------------------------------------------------------------------

struct MeteorParams {
  // Fmean = P*R / (alpha*P + (1-alpha)*R); alpha = 0.9 is the 9:1 recall
  // weighting of the 2005 formulation.
  double alpha = 0.9;
  double gamma = 0.5;
  double beta = 3.0;
  bool stem_stage = true;
};

struct AlignmentResult {
  std::size_t matches = 0;
  std::size_t chunks = 0;
  std::size_t pred_len = 0;
  std::size_t ref_len = 0;
  std::size_t exact_matches = 0;
  std::size_t stem_matches = 0;
  /// (pred index, ref index) pairs sorted by pred index.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

/// Unigram alignment maximizing the number of matches; among maximal
/// alignments the one with the fewest chunks wins, then the one with the
/// most exact (unstemmed) matches.
AlignmentResult meteor_align(const TokenSequence& pred, const TokenSequence& ref,
                             const MeteorParams& params = {});

MetricScore meteor(const TokenSequence& pred, const TokenSequence& ref,
                   const MeteorParams& params = {});

// ---------------------------------------------------------------------------
// chrF / TER / ROUGE-1 / BLEU-4
// ---------------------------------------------------------------------------

/// Character n-gram F-beta averaged over orders 1..max_n. Whitespace is
/// removed before extracting n-grams. Orders for which neither side has any
/// n-gram are skipped; an order where only one side has n-grams scores 0.
MetricScore chrf(std::string_view pred, std::string_view ref, int max_n = 6, double beta = 2.0);

struct TerDetail {
  std::size_t edits = 0;
  std::size_t shifts = 0;
  std::size_t ref_len = 0;
};

/// Translation edit rate: (edits + shifts) / ref_len. Throws MetricError on
/// an empty reference.
MetricScore ter(const TokenSequence& pred, const TokenSequence& ref, TerDetail* detail = nullptr);

/// Unigram overlap F1 with clipped counts.
MetricScore rouge1(const TokenSequence& pred, const TokenSequence& ref);

enum class BleuSmoothing {
  kNone,
  /// Orders n >= 2 whose clipped match count is zero use 1 / (total + 1).
  kAddOneOnZero,
};

MetricScore bleu4(const TokenSequence& pred, std::span<const TokenSequence> refs,
                  BleuSmoothing smoothing = BleuSmoothing::kAddOneOnZero);

// ---------------------------------------------------------------------------
// Statistics terms
// ---------------------------------------------------------------------------

/// Arithmetic mean of token probabilities. Every p must lie in (0, 1].
double mean_token_prob(std::span<const double> probs);

class WordFrequencyTable {
 public:
  static constexpr double kDefaultFloor = 1e-8;

  WordFrequencyTable() = default;
  WordFrequencyTable(std::unordered_map<std::string, double> freqs, double floor_frequency,
                     std::string corpus_name);

  double lookup(const std::string& token) const;
  bool contains(const std::string& token) const { return freqs_.count(token) != 0; }
  std::size_t size() const { return freqs_.size(); }
  double floor_frequency() const { return floor_; }
  const std::string& corpus_name() const { return corpus_name_; }

 private:
  std::unordered_map<std::string, double> freqs_;
  double floor_ = kDefaultFloor;
  std::string corpus_name_;
};

/// Mean table frequency over the tokens, unknown tokens at the floor.
double avg_word_frequency(const TokenSequence& tokens, const WordFrequencyTable& table);

}  // namespace gece
