#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "daf/corpus.hpp"

namespace daf {

// Everything a backend may key on when scoring one option. Real model
// adapters read only the three texts; the stub backends key on the question
// id and option index.
struct ScoreQuery {
  std::string_view question_id;
  int option_index = -1;
  std::string_view context;
  std::string_view question;
  std::string_view option;
};

inline ScoreQuery make_query(const Question& q, int option_index) {
  return ScoreQuery{q.id, option_index, q.context, q.question,
                    q.options.at(static_cast<size_t>(option_index))};
}

// Contract: score_option returns a real-valued logit and is deterministic for
// fixed inputs within one process. Implementations that cannot take
// concurrent calls return false from concurrent_calls_allowed(); the pipeline
// serializes access to those.
class ScorerBackend {
 public:
  virtual ~ScorerBackend() = default;
  virtual double score_option(const ScoreQuery& query) const = 0;
  virtual void score_batch(std::span<const ScoreQuery> queries, std::span<double> out) const {
    for (std::size_t i = 0; i < queries.size(); ++i) out[i] = score_option(queries[i]);
  }
  virtual bool concurrent_calls_allowed() const { return true; }
};

// Deterministic test double: logits from a (question id, option index) table,
// default logit for unknown keys.
class StubBackend : public ScorerBackend {
 public:
  StubBackend() = default;
  explicit StubBackend(double default_logit) : default_logit_(default_logit) {}

  void set(const std::string& question_id, int option_index, double logit) {
    table_[question_id][option_index] = logit;
  }
  void set_all(const std::string& question_id, const std::vector<double>& logits) {
    for (std::size_t i = 0; i < logits.size(); ++i)
      table_[question_id][static_cast<int>(i)] = logits[i];
  }

  double score_option(const ScoreQuery& query) const override {
    const auto it = table_.find(query.question_id);
    if (it != table_.end()) {
      const auto jt = it->second.find(query.option_index);
      if (jt != it->second.end()) return jt->second;
    }
    return default_logit_;
  }

  // {"default_logit": 0.0, "scores": {"<question id>": [logit per option]}}
  static StubBackend from_json_file(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("stub backend " + path.string() + ": invalid JSON: " + e.what());
    }
    StubBackend b(j.value("default_logit", 0.0));
    if (j.contains("scores"))
      for (const auto& [id, logits] : j["scores"].items())
        b.set_all(id, logits.get<std::vector<double>>());
    return b;
  }

 private:
  std::map<std::string, std::map<int, double>, std::less<>> table_;
  double default_logit_ = 0.0;
};

// Logits keyed by option text; lets scripted fixtures react to rewritten
// distractors, which the index-keyed stub cannot.
class TextLogitBackend : public ScorerBackend {
 public:
  TextLogitBackend() = default;
  explicit TextLogitBackend(double default_logit) : default_logit_(default_logit) {}

  void set(const std::string& option_text, double logit) { table_[option_text] = logit; }

  double score_option(const ScoreQuery& query) const override {
    const auto it = table_.find(query.option);
    return it != table_.end() ? it->second : default_logit_;
  }

  // {"default_logit": 0.0, "scores": {"<option text>": logit}}
  static TextLogitBackend from_json_file(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("text stub backend " + path.string() + ": invalid JSON: " + e.what());
    }
    TextLogitBackend b(j.value("default_logit", 0.0));
    if (j.contains("scores"))
      for (const auto& [text, logit] : j["scores"].items()) b.set(text, logit.get<double>());
    return b;
  }

 private:
  std::map<std::string, double, std::less<>> table_;
  double default_logit_ = 0.0;
};

class ConstantBackend : public ScorerBackend {
 public:
  explicit ConstantBackend(double logit = 0.0) : logit_(logit) {}
  double score_option(const ScoreQuery&) const override { return logit_; }

 private:
  double logit_;
};

// Serializes calls to a backend that does not permit concurrency.
class SerializedBackend : public ScorerBackend {
 public:
  explicit SerializedBackend(std::shared_ptr<ScorerBackend> inner) : inner_(std::move(inner)) {}
  double score_option(const ScoreQuery& query) const override {
    std::lock_guard lock(mutex_);
    return inner_->score_option(query);
  }
  bool concurrent_calls_allowed() const override { return true; }

 private:
  std::shared_ptr<ScorerBackend> inner_;
  mutable std::mutex mutex_;
};

// Per-option probabilities from the multi-class head.
struct ConfidenceDistribution {
  enum class Source { single, ensemble };
  std::vector<double> probs;
  Source source = Source::single;
};

struct CorrectnessProbability {
  double p_c = 0.0;
  int option_index = -1;
};

namespace detail {

inline double scored_logit(const ScorerBackend& backend, const ScoreQuery& query) {
  try {
    return backend.score_option(query);
  } catch (const std::exception& e) {
    throw std::runtime_error("backend failed for question '" + std::string(query.question_id) +
                             "' option " + std::to_string(query.option_index) + ": " + e.what());
  }
}

inline std::vector<double> softmax(const std::vector<double>& logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    total += out[i];
  }
  for (auto& v : out) v /= total;
  return out;
}

}  // namespace detail

// Multi-class head: per-option logits through a softmax, in option order.
inline ConfidenceDistribution multiclass_confidences(const ScorerBackend& backend, const Question& q) {
  if (q.num_options() < 2)
    throw std::invalid_argument("question '" + q.id + "' has fewer than 2 options");
  std::vector<double> logits(q.options.size());
  for (int i = 0; i < q.num_options(); ++i)
    logits[static_cast<size_t>(i)] = detail::scored_logit(backend, make_query(q, i));
  return ConfidenceDistribution{detail::softmax(logits), ConfidenceDistribution::Source::single};
}

// Binary head: sigmoid on the same logit the multi-class head would use for
// this option, scoring it in isolation.
inline CorrectnessProbability binary_correctness_prob(const ScorerBackend& backend,
                                                      const ScoreQuery& query) {
  if (query.option.empty()) throw std::invalid_argument("empty option text");
  const double logit = detail::scored_logit(backend, query);
  return CorrectnessProbability{1.0 / (1.0 + std::exp(-logit)), query.option_index};
}

using BackendList = std::vector<std::shared_ptr<ScorerBackend>>;

namespace detail {

// Arithmetic mean that returns unanimous values unchanged, so an ensemble of
// N copies of one backend reproduces the single-backend output exactly.
inline double mean_preserving_unanimity(const std::vector<double>& values) {
  bool all_equal = true;
  for (const auto& v : values)
    if (v != values.front()) {
      all_equal = false;
      break;
    }
  if (all_equal) return values.front();
  double sum = 0.0;
  for (const auto& v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

}  // namespace detail

// Ensemble combination averages probabilities (post-softmax), not logits.
inline ConfidenceDistribution ensemble_confidences(const BackendList& backends, const Question& q) {
  if (backends.empty()) throw std::invalid_argument("ensemble requires at least one backend");
  std::vector<ConfidenceDistribution> dists;
  dists.reserve(backends.size());
  for (const auto& b : backends) dists.push_back(multiclass_confidences(*b, q));
  ConfidenceDistribution out;
  out.source = backends.size() > 1 ? ConfidenceDistribution::Source::ensemble
                                   : ConfidenceDistribution::Source::single;
  out.probs.resize(q.options.size());
  std::vector<double> column(backends.size());
  for (std::size_t i = 0; i < out.probs.size(); ++i) {
    for (std::size_t b = 0; b < dists.size(); ++b) column[b] = dists[b].probs[i];
    out.probs[i] = detail::mean_preserving_unanimity(column);
  }
  return out;
}

// Binary-head probabilities ensemble the same way: arithmetic mean of p_c.
inline CorrectnessProbability ensemble_correctness_prob(const BackendList& backends,
                                                        const ScoreQuery& query) {
  if (backends.empty()) throw std::invalid_argument("ensemble requires at least one backend");
  std::vector<double> ps(backends.size());
  for (std::size_t b = 0; b < backends.size(); ++b)
    ps[b] = binary_correctness_prob(*backends[b], query).p_c;
  return CorrectnessProbability{detail::mean_preserving_unanimity(ps), query.option_index};
}

// Largest probability mass wins; ties break to the lowest option index.
inline int predict_answer(const ConfidenceDistribution& dist) {
  if (dist.probs.empty()) throw std::invalid_argument("empty confidence distribution");
  int best = 0;
  for (int i = 1; i < static_cast<int>(dist.probs.size()); ++i)
    if (dist.probs[static_cast<size_t>(i)] > dist.probs[static_cast<size_t>(best)]) best = i;
  return best;
}

}  // namespace daf
