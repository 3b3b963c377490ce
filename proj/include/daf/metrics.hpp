#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "daf/corpus.hpp"
#include "daf/scoring.hpp"

namespace daf {

enum class IncorrectnessLabel { incorrect, correct };

inline std::string to_string(IncorrectnessLabel l) {
  return l == IncorrectnessLabel::incorrect ? "incorrect" : "correct";
}

struct IncorrectnessDecision {
  IncorrectnessLabel label = IncorrectnessLabel::correct;
  double p_c = 0.0;
  double tau = 0.0;
};

// A distractor satisfies the incorrectness requirement when p_c < tau,
// strictly: p_c == tau is labelled correct.
inline IncorrectnessDecision incorrectness_decision(double p_c, double tau) {
  if (!(p_c >= 0.0 && p_c <= 1.0))
    throw std::invalid_argument("p_c out of [0,1]: " + std::to_string(p_c));
  if (!(tau >= 0.0 && tau <= 1.0))
    throw std::invalid_argument("tau out of [0,1]: " + std::to_string(tau));
  return IncorrectnessDecision{
      p_c < tau ? IncorrectnessLabel::incorrect : IncorrectnessLabel::correct, p_c, tau};
}

// Contract: equivalence(candidate, reference, question) in [0,1],
// deterministic. Learned equivalence models sit behind this interface; the
// scorer may be order-sensitive, so callers symmetrize.
class EquivalenceScorer {
 public:
  virtual ~EquivalenceScorer() = default;
  virtual double equivalence(const std::string& candidate, const std::string& reference,
                             const std::string& question) const = 0;
};

namespace detail {

inline std::set<std::string> word_set(const std::string& text) {
  std::set<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!cur.empty()) {
      out.insert(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.insert(cur);
  return out;
}

}  // namespace detail

// Deterministic token-overlap equivalence: Jaccard similarity of lowercased
// word sets. The question text is not used.
class TokenOverlapScorer : public EquivalenceScorer {
 public:
  double equivalence(const std::string& candidate, const std::string& reference,
                     const std::string&) const override {
    const auto a = detail::word_set(candidate);
    const auto b = detail::word_set(reference);
    std::size_t inter = 0;
    for (const auto& w : a) inter += b.count(w);
    const std::size_t uni = a.size() + b.size() - inter;
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
  }
};

// Test double: scores from an ordered-pair table. Identical strings score 1.0
// unless the table overrides them; unknown pairs fall back to a default.
class TableEquivalenceScorer : public EquivalenceScorer {
 public:
  TableEquivalenceScorer() = default;
  explicit TableEquivalenceScorer(double default_score) : default_(default_score) {}

  void set(const std::string& a, const std::string& b, double e) { table_[{a, b}] = e; }

  double equivalence(const std::string& candidate, const std::string& reference,
                     const std::string&) const override {
    const auto it = table_.find({candidate, reference});
    if (it != table_.end()) return it->second;
    if (candidate == reference) return 1.0;
    return default_;
  }

  // {"default": 0.0, "pairs": [{"a": "...", "b": "...", "e": 0.5}]}
  static TableEquivalenceScorer from_json_file(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("equivalence table " + path.string() + ": invalid JSON: " + e.what());
    }
    TableEquivalenceScorer s(j.value("default", 0.0));
    if (j.contains("pairs"))
      for (const auto& p : j["pairs"])
        s.set(p.at("a").get<std::string>(), p.at("b").get<std::string>(), p.at("e").get<double>());
    return s;
  }

 private:
  std::map<std::pair<std::string, std::string>, double> table_;
  double default_ = 0.0;
};

// The scorer is applied in both orderings and averaged. The context is never
// passed, only the question text.
inline double symmetric_equivalence(const EquivalenceScorer& scorer, const std::string& a,
                                    const std::string& b, const std::string& question) {
  if (a.empty() || b.empty()) throw std::invalid_argument("symmetric_equivalence: empty text");
  return (scorer.equivalence(a, b, question) + scorer.equivalence(b, a, question)) / 2.0;
}

// Diversity of K distractors: 1 minus the mean pairwise equivalence over the
// K^2-K ordered pairs. Undefined for K < 2 (the pair count is zero).
struct DiversityScore {
  std::optional<double> value;
  std::vector<std::vector<double>> pairwise;  // symmetrized, diagonal unused
};

inline DiversityScore diversity(const EquivalenceScorer& scorer,
                                const std::vector<std::string>& distractors,
                                const std::string& question) {
  const std::size_t k = distractors.size();
  DiversityScore out;
  out.pairwise.assign(k, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) {
      const double s = symmetric_equivalence(scorer, distractors[i], distractors[j], question);
      out.pairwise[i][j] = s;
      out.pairwise[j][i] = s;
    }
  if (k < 2) return out;
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      if (i != j) sum += out.pairwise[i][j];
  out.value = 1.0 - sum / static_cast<double>(k * k - k);
  return out;
}

// Distractor probability mass: 1 minus the confidence of the top option.
// When the max is tied the single max value is still used.
inline double plausibility(const ConfidenceDistribution& dist) {
  if (dist.probs.empty()) throw std::invalid_argument("empty confidence distribution");
  return 1.0 - *std::max_element(dist.probs.begin(), dist.probs.end());
}

// Human analogue of plausibility: the fraction of candidates who did not pick
// the answer.
inline double candidate_plausibility(const Question& q) {
  if (!q.candidate_distribution)
    throw std::invalid_argument("question '" + q.id + "' has no candidate distribution");
  return 1.0 - q.candidate_distribution->at(static_cast<size_t>(q.answer_index));
}

// Percentage of distractors labelled incorrect at tau, pooled across all
// questions. This is the headline incorrectness number.
inline double incorrectness_rate(const QuestionSet& set, const ScorerBackend& backend, double tau) {
  if (set.empty()) throw std::invalid_argument("incorrectness_rate: empty question set");
  std::size_t total = 0, incorrect = 0;
  for (const auto& q : set.questions) {
    for (int i : q.distractor_indices()) {
      const auto p = binary_correctness_prob(backend, make_query(q, i));
      const auto d = incorrectness_decision(p.p_c, tau);
      ++total;
      if (d.label == IncorrectnessLabel::incorrect) ++incorrect;
    }
  }
  return 100.0 * static_cast<double>(incorrect) / static_cast<double>(total);
}

// Secondary variant: mean of per-question incorrectness rates. Not the
// headline number; questions with many distractors weigh the same as those
// with few.
inline double incorrectness_rate_per_question(const QuestionSet& set, const ScorerBackend& backend,
                                              double tau) {
  if (set.empty()) throw std::invalid_argument("incorrectness_rate_per_question: empty question set");
  double sum = 0.0;
  for (const auto& q : set.questions) {
    std::size_t total = 0, incorrect = 0;
    for (int i : q.distractor_indices()) {
      const auto p = binary_correctness_prob(backend, make_query(q, i));
      ++total;
      if (incorrectness_decision(p.p_c, tau).label == IncorrectnessLabel::incorrect) ++incorrect;
    }
    sum += static_cast<double>(incorrect) / static_cast<double>(total);
  }
  return 100.0 * sum / static_cast<double>(set.size());
}

}  // namespace daf
