#include "gece/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "gece/stemmer.hpp"

namespace gece {

// ---------------------------------------------------------------------------
// METEOR
// ---------------------------------------------------------------------------

namespace {

// Depth-first search over pred positions. Every stem class must receive
// exactly min(#pred, #ref) matches, which is the maximum matching size since
// the candidate graph is a disjoint union of complete bipartite blocks.
class AlignmentSearch {
 public:
  static constexpr std::size_t kNodeBudget = 2'000'000;

  AlignmentSearch(const std::vector<std::string>& pred, const std::vector<std::string>& ref,
                  bool use_stems)
      : pred_(pred), ref_(ref) {
    std::map<std::string, int> class_ids;
    auto class_of = [&](const std::string& tok) {
      std::string key = use_stems ? porter_stem(tok) : tok;
      auto [it, inserted] = class_ids.emplace(key, static_cast<int>(class_ids.size()));
      return it->second;
    };
    pred_class_.reserve(pred.size());
    for (const auto& t : pred) pred_class_.push_back(class_of(t));
    ref_class_.reserve(ref.size());
    for (const auto& t : ref) ref_class_.push_back(class_of(t));

    const std::size_t num_classes = class_ids.size();
    std::vector<std::size_t> pred_count(num_classes, 0), ref_count(num_classes, 0);
    for (int c : pred_class_) ++pred_count[c];
    for (int c : ref_class_) ++ref_count[c];
    quota_.resize(num_classes);
    for (std::size_t c = 0; c < num_classes; ++c) {
      quota_[c] = std::min(pred_count[c], ref_count[c]);
      total_quota_ += quota_[c];
    }
    // remaining_[i] = pred tokens of class pred_class_[i] at positions >= i.
    remaining_.assign(pred.size(), 0);
    std::vector<std::size_t> seen(num_classes, 0);
    for (std::size_t i = pred.size(); i-- > 0;) {
      remaining_[i] = ++seen[pred_class_[i]];
    }
    // Candidate ref positions per class, ascending.
    ref_positions_.resize(num_classes);
    for (std::size_t j = 0; j < ref.size(); ++j) ref_positions_[ref_class_[j]].push_back(j);
  }

  AlignmentResult run() {
    AlignmentResult best;
    best.pred_len = pred_.size();
    best.ref_len = ref_.size();
    if (total_quota_ == 0) return best;

    used_.assign(ref_.size(), false);
    matched_per_class_.assign(quota_.size(), 0);
    current_.clear();
    best_chunks_ = std::numeric_limits<std::size_t>::max();
    best_exact_ = 0;
    dfs(0, 0, 0, kNone, kNone);

    best.pairs = best_pairs_;
    best.matches = best_pairs_.size();
    best.chunks = best_chunks_;
    for (auto [i, j] : best_pairs_) {
      if (pred_[i] == ref_[j]) {
        ++best.exact_matches;
      } else {
        ++best.stem_matches;
      }
    }
    return best;
  }

 private:
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

  void dfs(std::size_t i, std::size_t chunks, std::size_t exact, std::size_t last_i,
           std::size_t last_j) {
    if (++nodes_ > kNodeBudget && !best_pairs_.empty()) return;
    if (chunks > best_chunks_) return;
    if (i == pred_.size()) {
      if (current_.size() != total_quota_) return;
      if (chunks < best_chunks_ || (chunks == best_chunks_ && exact > best_exact_)) {
        best_chunks_ = chunks;
        best_exact_ = exact;
        best_pairs_ = current_;
      }
      return;
    }
    const int c = pred_class_[i];
    const std::size_t needed = quota_[c] - matched_per_class_[c];

    if (needed > 0) {
      // Continuing the current chunk first finds low-chunk alignments early.
      std::vector<std::size_t> order;
      order.reserve(ref_positions_[c].size());
      if (last_i == i - 1 && last_j != kNone && last_j + 1 < ref_.size() &&
          ref_class_[last_j + 1] == c && !used_[last_j + 1]) {
        order.push_back(last_j + 1);
      }
      for (std::size_t j : ref_positions_[c]) {
        if (!used_[j] && (order.empty() || order.front() != j)) order.push_back(j);
      }
      for (std::size_t j : order) {
        const bool continues = last_i != kNone && last_i + 1 == i && last_j + 1 == j;
        used_[j] = true;
        ++matched_per_class_[c];
        current_.emplace_back(i, j);
        dfs(i + 1, chunks + (continues ? 0 : 1), exact + (pred_[i] == ref_[j] ? 1 : 0), i, j);
        current_.pop_back();
        --matched_per_class_[c];
        used_[j] = false;
      }
    }
    // Leaving token i unmatched is allowed only if the class quota can still
    // be met by later tokens.
    if (remaining_[i] - 1 >= needed) dfs(i + 1, chunks, exact, last_i, last_j);
  }

  const std::vector<std::string>& pred_;
  const std::vector<std::string>& ref_;
  std::vector<int> pred_class_;
  std::vector<int> ref_class_;
  std::vector<std::size_t> quota_;
  std::size_t total_quota_ = 0;
  std::vector<std::size_t> remaining_;
  std::vector<std::vector<std::size_t>> ref_positions_;

  std::vector<bool> used_;
  std::vector<std::size_t> matched_per_class_;
  std::vector<std::pair<std::size_t, std::size_t>> current_;
  std::vector<std::pair<std::size_t, std::size_t>> best_pairs_;
  std::size_t best_chunks_ = 0;
  std::size_t best_exact_ = 0;
  std::size_t nodes_ = 0;
};

}  // namespace

AlignmentResult meteor_align(const TokenSequence& pred, const TokenSequence& ref,
                             const MeteorParams& params) {
  return AlignmentSearch(pred.tokens, ref.tokens, params.stem_stage).run();
}

MetricScore meteor(const TokenSequence& pred, const TokenSequence& ref, const MeteorParams& params) {
  MetricScore out{0.0, "meteor", 0.0, 1.0, {}};
  const AlignmentResult a = meteor_align(pred, ref, params);
  std::ostringstream meta;
  meta << "matches=" << a.matches << ";chunks=" << a.chunks << ";exact=" << a.exact_matches
       << ";stem=" << a.stem_matches;
  out.metadata = meta.str();
  if (a.matches == 0) return out;

  const double m = static_cast<double>(a.matches);
  const double precision = m / static_cast<double>(a.pred_len);
  const double recall = m / static_cast<double>(a.ref_len);
  const double fmean =
      precision * recall / (params.alpha * precision + (1.0 - params.alpha) * recall);
  const double frag = static_cast<double>(a.chunks) / m;
  const double penalty = params.gamma * std::pow(frag, params.beta);
  out.value = fmean * (1.0 - penalty);
  return out;
}

// ---------------------------------------------------------------------------
// chrF
// ---------------------------------------------------------------------------

namespace {

// Splits UTF-8 text into code points, dropping whitespace.
std::vector<std::string> code_points_without_space(std::string_view text) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < text.size();) {
    unsigned char c = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if (c >= 0xF0) {
      len = 4;
    } else if (c >= 0xE0) {
      len = 3;
    } else if (c >= 0xC0) {
      len = 2;
    }
    len = std::min(len, text.size() - i);
    if (!(len == 1 && (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'))) {
      out.emplace_back(text.substr(i, len));
    }
    i += len;
  }
  return out;
}

std::map<std::string, std::size_t> char_ngrams(const std::vector<std::string>& chars, int n) {
  std::map<std::string, std::size_t> counts;
  const auto order = static_cast<std::size_t>(n);
  if (chars.size() < order) return counts;
  for (std::size_t i = 0; i + order <= chars.size(); ++i) {
    std::string gram;
    for (std::size_t k = 0; k < order; ++k) gram += chars[i + k];
    ++counts[gram];
  }
  return counts;
}

}  // namespace

MetricScore chrf(std::string_view pred, std::string_view ref, int max_n, double beta) {
  MetricScore out{0.0, "chrf", 0.0, 1.0, {}};
  const auto hyp_chars = code_points_without_space(pred);
  const auto ref_chars = code_points_without_space(ref);
  if (hyp_chars.empty() || ref_chars.empty()) {
    if (hyp_chars.empty() && ref_chars.empty() && !pred.empty() && pred == ref) out.value = 1.0;
    return out;
  }
  const double beta2 = beta * beta;
  double f_sum = 0.0;
  int orders = 0;
  for (int n = 1; n <= max_n; ++n) {
    const auto h = char_ngrams(hyp_chars, n);
    const auto r = char_ngrams(ref_chars, n);
    if (h.empty() && r.empty()) continue;
    ++orders;
    if (h.empty() || r.empty()) continue;
    std::size_t h_total = 0, r_total = 0, matched = 0;
    for (const auto& [g, c] : h) h_total += c;
    for (const auto& [g, c] : r) r_total += c;
    for (const auto& [g, c] : h) {
      auto it = r.find(g);
      if (it != r.end()) matched += std::min(c, it->second);
    }
    if (matched == 0) continue;
    const double p = static_cast<double>(matched) / static_cast<double>(h_total);
    const double rc = static_cast<double>(matched) / static_cast<double>(r_total);
    f_sum += (1.0 + beta2) * p * rc / (beta2 * p + rc);
  }
  out.value = orders == 0 ? 0.0 : f_sum / orders;
  std::ostringstream meta;
  meta << "max_n=" << max_n << ";beta=" << beta << ";effective_orders=" << orders;
  out.metadata = meta.str();
  return out;
}

// ---------------------------------------------------------------------------
// TER
// ---------------------------------------------------------------------------

namespace {

constexpr std::size_t kMaxShiftSpan = 10;

std::size_t edit_distance(const std::vector<std::string>& hyp, const std::vector<std::string>& ref) {
  std::vector<std::size_t> prev(ref.size() + 1), cur(ref.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= hyp.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= ref.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (hyp[i - 1] == ref[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[ref.size()];
}

bool span_occurs_in(const std::vector<std::string>& hyp, std::size_t start, std::size_t len,
                    const std::vector<std::string>& ref) {
  if (len > ref.size()) return false;
  for (std::size_t j = 0; j + len <= ref.size(); ++j) {
    if (std::equal(hyp.begin() + static_cast<std::ptrdiff_t>(start),
                   hyp.begin() + static_cast<std::ptrdiff_t>(start + len),
                   ref.begin() + static_cast<std::ptrdiff_t>(j))) {
      return true;
    }
  }
  return false;
}

// Moves hyp[start, start+len) so that it begins at index `dest` of the
// sequence with the span removed.
std::vector<std::string> apply_shift(const std::vector<std::string>& hyp, std::size_t start,
                                     std::size_t len, std::size_t dest) {
  std::vector<std::string> rest;
  rest.reserve(hyp.size());
  for (std::size_t i = 0; i < hyp.size(); ++i) {
    if (i < start || i >= start + len) rest.push_back(hyp[i]);
  }
  std::vector<std::string> out(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(dest));
  out.insert(out.end(), hyp.begin() + static_cast<std::ptrdiff_t>(start),
             hyp.begin() + static_cast<std::ptrdiff_t>(start + len));
  out.insert(out.end(), rest.begin() + static_cast<std::ptrdiff_t>(dest), rest.end());
  return out;
}

}  // namespace

MetricScore ter(const TokenSequence& pred, const TokenSequence& ref, TerDetail* detail) {
  if (ref.empty()) throw MetricError("undefined TER: empty reference");
  std::vector<std::string> hyp = pred.tokens;
  std::size_t cost = edit_distance(hyp, ref.tokens);
  std::size_t shifts = 0;

  // Greedy: repeatedly take the single phrase shift with the largest drop
  // in edit distance, as long as the drop exceeds the shift's own cost.
  while (cost > 0) {
    std::size_t best_cost = cost;
    std::vector<std::string> best_hyp;
    for (std::size_t start = 0; start < hyp.size(); ++start) {
      for (std::size_t len = 1; len <= kMaxShiftSpan && start + len <= hyp.size(); ++len) {
        if (!span_occurs_in(hyp, start, len, ref.tokens)) break;
        const std::size_t rest = hyp.size() - len;
        for (std::size_t dest = 0; dest <= rest; ++dest) {
          if (dest == start) continue;
          auto candidate = apply_shift(hyp, start, len, dest);
          const std::size_t c = edit_distance(candidate, ref.tokens);
          if (c + 1 < best_cost) {
            best_cost = c + 1;
            best_hyp = std::move(candidate);
          }
        }
      }
    }
    if (best_hyp.empty()) break;
    hyp = std::move(best_hyp);
    cost = best_cost - 1;
    ++shifts;
  }

  MetricScore out{0.0, "ter", 0.0, std::numeric_limits<double>::infinity(), {}};
  out.value = static_cast<double>(cost + shifts) / static_cast<double>(ref.size());
  std::ostringstream meta;
  meta << "edits=" << cost << ";shifts=" << shifts << ";ref_len=" << ref.size();
  out.metadata = meta.str();
  if (detail) *detail = TerDetail{cost, shifts, ref.size()};
  return out;
}

// ---------------------------------------------------------------------------
// ROUGE-1 / BLEU-4
// ---------------------------------------------------------------------------

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngram_counts(const std::vector<std::string>& tokens, std::size_t n) {
  NgramCounts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                      tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

}  // namespace

MetricScore rouge1(const TokenSequence& pred, const TokenSequence& ref) {
  MetricScore out{0.0, "rouge1", 0.0, 1.0, {}};
  if (pred.empty() || ref.empty()) return out;
  const auto p = ngram_counts(pred.tokens, 1);
  const auto r = ngram_counts(ref.tokens, 1);
  std::size_t overlap = 0;
  for (const auto& [g, c] : p) {
    auto it = r.find(g);
    if (it != r.end()) overlap += std::min(c, it->second);
  }
  if (overlap == 0) return out;
  const double precision = static_cast<double>(overlap) / static_cast<double>(pred.size());
  const double recall = static_cast<double>(overlap) / static_cast<double>(ref.size());
  out.value = 2.0 * precision * recall / (precision + recall);
  return out;
}

MetricScore bleu4(const TokenSequence& pred, std::span<const TokenSequence> refs,
                  BleuSmoothing smoothing) {
  if (refs.empty()) throw MetricError("bleu4 needs at least one reference");
  MetricScore out{0.0, "bleu4", 0.0, 1.0, {}};
  std::ostringstream meta;
  meta << "smoothing=" << (smoothing == BleuSmoothing::kAddOneOnZero ? "add_one_on_zero" : "none")
       << ";smoothed_orders=";
  if (pred.empty()) {
    out.metadata = meta.str();
    return out;
  }

  double log_sum = 0.0;
  bool first_smoothed = true;
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto hyp = ngram_counts(pred.tokens, n);
    NgramCounts max_ref;
    for (const auto& r : refs) {
      for (const auto& [g, c] : ngram_counts(r.tokens, n)) {
        auto& slot = max_ref[g];
        slot = std::max(slot, c);
      }
    }
    std::size_t total = 0, clipped = 0;
    for (const auto& [g, c] : hyp) {
      total += c;
      auto it = max_ref.find(g);
      if (it != max_ref.end()) clipped += std::min(c, it->second);
    }
    double precision;
    if (clipped > 0) {
      precision = static_cast<double>(clipped) / static_cast<double>(total);
    } else if (n >= 2 && smoothing == BleuSmoothing::kAddOneOnZero) {
      precision = 1.0 / static_cast<double>(total + 1);
      meta << (first_smoothed ? "" : ",") << n;
      first_smoothed = false;
    } else {
      out.metadata = meta.str();
      return out;
    }
    log_sum += std::log(precision);
  }

  // Closest reference length, shorter on ties.
  const std::size_t c = pred.size();
  std::size_t r = refs.front().size();
  for (const auto& ref : refs) {
    const auto d = [c](std::size_t len) { return len > c ? len - c : c - len; };
    if (d(ref.size()) < d(r) || (d(ref.size()) == d(r) && ref.size() < r)) r = ref.size();
  }
  const double bp =
      c > r ? 1.0 : std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
  out.value = std::min(1.0, bp * std::exp(log_sum / 4.0));
  out.metadata = meta.str();
  return out;
}

// ---------------------------------------------------------------------------
// Statistics terms
// ---------------------------------------------------------------------------

double mean_token_prob(std::span<const double> probs) {
  if (probs.empty()) throw MetricError("no generated tokens");
  double sum = 0.0;
  for (double p : probs) {
    if (!(p > 0.0 && p <= 1.0)) {
      throw MetricError("token probability out of range (0, 1]: " + std::to_string(p));
    }
    sum += p;
  }
  return sum / static_cast<double>(probs.size());
}

WordFrequencyTable::WordFrequencyTable(std::unordered_map<std::string, double> freqs,
                                       double floor_frequency, std::string corpus_name)
    : freqs_(std::move(freqs)), floor_(floor_frequency), corpus_name_(std::move(corpus_name)) {
  if (!(floor_ > 0.0)) throw MetricError("floor frequency must be positive");
  for (const auto& [tok, f] : freqs_) {
    if (!(f > 0.0) || f > 1.0) throw MetricError("frequency of '" + tok + "' outside (0, 1]");
    if (f < floor_) throw MetricError("floor frequency exceeds stored frequency of '" + tok + "'");
  }
}

double WordFrequencyTable::lookup(const std::string& token) const {
  auto it = freqs_.find(token);
  return it == freqs_.end() ? floor_ : it->second;
}

double avg_word_frequency(const TokenSequence& tokens, const WordFrequencyTable& table) {
  if (tokens.empty()) throw MetricError("average word frequency of an empty token sequence");
  double sum = 0.0;
  for (const auto& t : tokens.tokens) sum += table.lookup(t);
  return sum / static_cast<double>(tokens.size());
}

}  // namespace gece
