#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "daf/corpus.hpp"
#include "daf/io.hpp"
#include "daf/metrics.hpp"
#include "daf/scoring.hpp"

namespace daf {

struct PipelineConfig {
  double tau = 0.25;
  std::vector<std::string> backends;  // registry names, at least one
  std::string equivalence = "token-overlap";
  std::filesystem::path out;
  std::uint64_t seed = 0;  // recorded in reports; reserved for subsampling
  bool context_free = false;
  int jobs = 1;
  bool post_filter_diversity = false;  // optional secondary column
};

inline void validate_config(const PipelineConfig& cfg) {
  if (!(cfg.tau >= 0.0 && cfg.tau <= 1.0))
    throw std::invalid_argument("tau out of [0,1]: " + std::to_string(cfg.tau));
  if (cfg.backends.empty()) throw std::invalid_argument("at least one backend is required");
  if (cfg.jobs < 1) throw std::invalid_argument("jobs must be >= 1");
}

// Everything the pipeline derives for one question. The answer option is
// never filtered: kept/rejected partition the distractor indices only.
struct QuestionReport {
  std::string id;
  std::optional<std::string> level;
  bool failed = false;
  std::string error;

  std::vector<double> p_c;                      // per option, binary head
  std::vector<IncorrectnessLabel> labels;       // per option, Eq.-style decision at tau
  std::vector<int> kept;                        // distractors labelled incorrect
  std::vector<int> rejected;                    // distractors labelled correct
  ConfidenceDistribution confidences;
  double plausibility = 0.0;
  DiversityScore diversity;                     // over the pre-filter distractor set
  std::optional<double> post_filter_diversity;  // when enabled and >= 2 kept
  int predicted_index = -1;
  bool correct = false;
};

struct LevelAggregate {
  std::size_t questions = 0;
  std::size_t failed = 0;
  std::size_t correct = 0;
  std::size_t distractors = 0;
  std::size_t incorrect_distractors = 0;
  double plausibility_sum = 0.0;
  std::size_t diversity_defined = 0;
  double diversity_sum = 0.0;

  std::size_t evaluated() const { return questions - failed; }
  double accuracy_pct() const {
    return 100.0 * static_cast<double>(correct) / static_cast<double>(evaluated());
  }
  double incorrectness_rate_pct() const {
    return 100.0 * static_cast<double>(incorrect_distractors) / static_cast<double>(distractors);
  }
  double mean_plausibility_pct() const {
    return 100.0 * plausibility_sum / static_cast<double>(evaluated());
  }
  std::optional<double> mean_diversity_pct() const {
    if (diversity_defined == 0) return std::nullopt;
    return 100.0 * diversity_sum / static_cast<double>(diversity_defined);
  }
};

struct CorpusReport {
  std::size_t questions = 0;
  std::size_t failed = 0;
  double accuracy_pct = 0.0;
  double incorrectness_rate_pct = 0.0;
  double mean_plausibility_pct = 0.0;
  std::optional<double> mean_diversity_pct;
  std::size_t diversity_defined = 0;
  std::map<std::string, LevelAggregate> per_level;
};

struct RunResult {
  CorpusReport summary;
  std::vector<QuestionReport> reports;
};

// Filtration for one question: binary-head p_c per option, the strict
// incorrectness decision at tau on each distractor, plausibility from the
// multi-class confidences, diversity over the full original distractor set.
inline QuestionReport evaluate_question(const Question& q, const PipelineConfig& cfg,
                                        const BackendList& backends,
                                        const EquivalenceScorer& equivalence) {
  QuestionReport r;
  r.id = q.id;
  r.level = q.level;
  try {
    r.p_c.resize(q.options.size());
    r.labels.resize(q.options.size());
    for (int i = 0; i < q.num_options(); ++i) {
      r.p_c[static_cast<size_t>(i)] = ensemble_correctness_prob(backends, make_query(q, i)).p_c;
      r.labels[static_cast<size_t>(i)] =
          incorrectness_decision(r.p_c[static_cast<size_t>(i)], cfg.tau).label;
    }
    for (int i : q.distractor_indices()) {
      if (r.labels[static_cast<size_t>(i)] == IncorrectnessLabel::incorrect)
        r.kept.push_back(i);
      else
        r.rejected.push_back(i);
    }
    r.confidences = ensemble_confidences(backends, q);
    r.plausibility = plausibility(r.confidences);
    r.diversity = diversity(equivalence, q.distractor_texts(), q.question);
    if (cfg.post_filter_diversity) {
      std::vector<std::string> kept_texts;
      for (int i : r.kept) kept_texts.push_back(q.options[static_cast<size_t>(i)]);
      r.post_filter_diversity = diversity(equivalence, kept_texts, q.question).value;
    }
    r.predicted_index = predict_answer(r.confidences);
    r.correct = r.predicted_index == q.answer_index;
  } catch (const std::exception& e) {
    r.failed = true;
    r.error = e.what();
  }
  return r;
}

namespace detail {

inline QuestionSet strip_contexts(const QuestionSet& set) {
  QuestionSet out = set;
  for (auto& q : out.questions) q.context.clear();
  return out;
}

// Backends that forbid concurrent calls get a serializing wrapper when the
// run is parallel.
inline BackendList prepare_backends(const BackendList& backends, int jobs) {
  if (jobs <= 1) return backends;
  BackendList out;
  out.reserve(backends.size());
  for (const auto& b : backends)
    out.push_back(b->concurrent_calls_allowed()
                      ? b
                      : std::static_pointer_cast<ScorerBackend>(std::make_shared<SerializedBackend>(b)));
  return out;
}

inline CorpusReport aggregate_reports(const std::vector<QuestionReport>& reports) {
  CorpusReport sum;
  std::size_t correct = 0, distractors = 0, incorrect = 0;
  double plaus_sum = 0.0, div_sum = 0.0;
  for (const auto& r : reports) {
    auto& lvl = sum.per_level[r.level.value_or("")];
    ++sum.questions;
    ++lvl.questions;
    if (r.failed) {
      ++sum.failed;
      ++lvl.failed;
      continue;
    }
    if (r.correct) {
      ++correct;
      ++lvl.correct;
    }
    const std::size_t n_dist = r.kept.size() + r.rejected.size();
    distractors += n_dist;
    lvl.distractors += n_dist;
    incorrect += r.kept.size();
    lvl.incorrect_distractors += r.kept.size();
    plaus_sum += r.plausibility;
    lvl.plausibility_sum += r.plausibility;
    if (r.diversity.value) {
      ++sum.diversity_defined;
      ++lvl.diversity_defined;
      div_sum += *r.diversity.value;
      lvl.diversity_sum += *r.diversity.value;
    }
  }
  const std::size_t evaluated = sum.questions - sum.failed;
  if (evaluated == 0) throw std::runtime_error("all questions failed");
  sum.accuracy_pct = 100.0 * static_cast<double>(correct) / static_cast<double>(evaluated);
  sum.incorrectness_rate_pct =
      100.0 * static_cast<double>(incorrect) / static_cast<double>(distractors);
  sum.mean_plausibility_pct = 100.0 * plaus_sum / static_cast<double>(evaluated);
  if (sum.diversity_defined > 0)
    sum.mean_diversity_pct = 100.0 * div_sum / static_cast<double>(sum.diversity_defined);
  return sum;
}

}  // namespace detail

// Evaluates every question and aggregates. Failures are isolated per
// question: a failed report is excluded from aggregates and tallied.
// Reports come back in input order whatever the job count.
inline RunResult run_corpus(const QuestionSet& input, const PipelineConfig& cfg,
                            const BackendList& backends, const EquivalenceScorer& equivalence) {
  validate_config(cfg);
  if (input.empty()) throw std::invalid_argument("run_corpus: empty question set");
  const QuestionSet set = cfg.context_free ? detail::strip_contexts(input) : input;
  const BackendList prepared = detail::prepare_backends(backends, cfg.jobs);

  RunResult result;
  result.reports.resize(set.size());
  if (cfg.jobs <= 1) {
    for (std::size_t i = 0; i < set.size(); ++i)
      result.reports[i] = evaluate_question(set.questions[i], cfg, prepared, equivalence);
  } else {
    std::atomic<std::size_t> next{0};
    const int n_workers = std::min<int>(cfg.jobs, static_cast<int>(set.size()));
    std::vector<std::thread> workers;
    workers.reserve(static_cast<size_t>(n_workers));
    for (int w = 0; w < n_workers; ++w)
      workers.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < set.size(); i = next.fetch_add(1))
          result.reports[i] = evaluate_question(set.questions[i], cfg, prepared, equivalence);
      });
    for (auto& t : workers) t.join();
  }
  result.summary = detail::aggregate_reports(result.reports);
  return result;
}

struct SweepPoint {
  double tau = 0.0;
  double incorrectness_rate_pct = 0.0;
  std::size_t kept_distractors = 0;
};

// Incorrectness rate and surviving-distractor count across a tau grid.
// Points come back sorted by tau; the rate is non-decreasing along the grid.
inline std::vector<SweepPoint> sweep_tau(const QuestionSet& input, const PipelineConfig& cfg,
                                         std::vector<double> grid, const BackendList& backends) {
  validate_config(cfg);
  if (grid.empty()) throw std::invalid_argument("sweep_tau: empty grid");
  for (double t : grid)
    if (!(t >= 0.0 && t <= 1.0))
      throw std::invalid_argument("sweep_tau: grid value out of [0,1]: " + std::to_string(t));
  if (input.empty()) throw std::invalid_argument("sweep_tau: empty question set");
  const QuestionSet set = cfg.context_free ? detail::strip_contexts(input) : input;

  std::vector<double> pooled;
  for (const auto& q : set.questions) {
    try {
      std::vector<double> ps;
      for (int i : q.distractor_indices())
        ps.push_back(ensemble_correctness_prob(backends, make_query(q, i)).p_c);
      pooled.insert(pooled.end(), ps.begin(), ps.end());
    } catch (const std::exception&) {
      // failed questions are excluded, as in run_corpus
    }
  }
  if (pooled.empty()) throw std::runtime_error("sweep_tau: all questions failed");

  std::sort(grid.begin(), grid.end());
  std::vector<SweepPoint> out;
  out.reserve(grid.size());
  for (double t : grid) {
    std::size_t n_inc = 0;
    for (double p : pooled)
      if (p < t) ++n_inc;
    SweepPoint pt;
    pt.tau = t;
    pt.kept_distractors = n_inc;
    pt.incorrectness_rate_pct =
        100.0 * static_cast<double>(n_inc) / static_cast<double>(pooled.size());
    out.push_back(pt);
  }
  return out;
}

// ---- report serialization -------------------------------------------------
// Line-delimited records mirroring QuestionReport, then one summary record.
// Raw values keep full precision; the rendered table rounds to one decimal.

inline nlohmann::ordered_json question_report_to_json(const QuestionReport& r) {
  nlohmann::ordered_json j;
  j["type"] = "question";
  j["id"] = r.id;
  if (r.level) j["level"] = *r.level;
  j["failed"] = r.failed;
  if (r.failed) {
    j["error"] = r.error;
    return j;
  }
  j["p_c"] = r.p_c;
  nlohmann::ordered_json labels = nlohmann::ordered_json::array();
  for (auto l : r.labels) labels.push_back(to_string(l));
  j["labels"] = labels;
  j["kept"] = r.kept;
  j["rejected"] = r.rejected;
  j["confidences"] = r.confidences.probs;
  j["confidence_source"] =
      r.confidences.source == ConfidenceDistribution::Source::ensemble ? "ensemble" : "single";
  j["plausibility"] = r.plausibility;
  if (r.diversity.value)
    j["diversity"] = *r.diversity.value;
  else
    j["diversity"] = nullptr;
  if (r.post_filter_diversity) j["post_filter_diversity"] = *r.post_filter_diversity;
  j["predicted_index"] = r.predicted_index;
  j["correct"] = r.correct;
  return j;
}

inline nlohmann::ordered_json level_aggregate_to_json(const LevelAggregate& a) {
  nlohmann::ordered_json j;
  j["questions"] = a.questions;
  j["failed"] = a.failed;
  j["correct"] = a.correct;
  j["distractors"] = a.distractors;
  j["incorrect_distractors"] = a.incorrect_distractors;
  j["diversity_defined"] = a.diversity_defined;
  if (a.evaluated() > 0) {
    j["accuracy_pct"] = a.accuracy_pct();
    j["incorrectness_rate_pct"] = a.incorrectness_rate_pct();
    j["mean_plausibility_pct"] = a.mean_plausibility_pct();
    const auto d = a.mean_diversity_pct();
    j["mean_diversity_pct"] = d ? nlohmann::ordered_json(*d) : nlohmann::ordered_json(nullptr);
  }
  return j;
}

inline nlohmann::ordered_json summary_to_json(const CorpusReport& s, const PipelineConfig& cfg) {
  nlohmann::ordered_json j;
  j["type"] = "summary";
  j["questions"] = s.questions;
  j["failed"] = s.failed;
  j["accuracy_pct"] = s.accuracy_pct;
  j["incorrectness_rate_pct"] = s.incorrectness_rate_pct;
  j["mean_plausibility_pct"] = s.mean_plausibility_pct;
  j["mean_diversity_pct"] =
      s.mean_diversity_pct ? nlohmann::ordered_json(*s.mean_diversity_pct) : nlohmann::ordered_json(nullptr);
  j["diversity_defined"] = s.diversity_defined;
  nlohmann::ordered_json levels;
  for (const auto& [lvl, agg] : s.per_level) levels[lvl] = level_aggregate_to_json(agg);
  j["per_level"] = levels;
  j["tau"] = cfg.tau;
  j["backends"] = cfg.backends;
  j["equivalence"] = cfg.equivalence;
  j["seed"] = cfg.seed;
  j["context_free"] = cfg.context_free;
  return j;
}

inline std::string render_report_jsonl(const RunResult& result, const PipelineConfig& cfg) {
  std::string out;
  for (const auto& r : result.reports) {
    out += question_report_to_json(r).dump();
    out += '\n';
  }
  out += summary_to_json(result.summary, cfg).dump();
  out += '\n';
  return out;
}

inline void write_report_jsonl(const std::filesystem::path& path, const RunResult& result,
                               const PipelineConfig& cfg) {
  atomic_write_text(path, render_report_jsonl(result, cfg));
}

// Human-readable aggregate table, percentages at one decimal.
inline std::string render_summary_table(const CorpusReport& s, const std::string& name) {
  std::string out;
  auto row = [&](const std::string& label, const LevelAggregate& a) {
    if (a.evaluated() == 0) {
      out += label + "  (no evaluated questions)\n";
      return;
    }
    const auto d = a.mean_diversity_pct();
    out += label + "  acc " + pct1(a.accuracy_pct()) + "  incorr " + pct1(a.incorrectness_rate_pct()) +
           "  plaus " + pct1(a.mean_plausibility_pct()) + "  divers " + (d ? pct1(*d) : "n/a") + "\n";
  };
  LevelAggregate total;
  for (const auto& [lvl, a] : s.per_level) {
    total.questions += a.questions;
    total.failed += a.failed;
    total.correct += a.correct;
    total.distractors += a.distractors;
    total.incorrect_distractors += a.incorrect_distractors;
    total.plausibility_sum += a.plausibility_sum;
    total.diversity_defined += a.diversity_defined;
    total.diversity_sum += a.diversity_sum;
  }
  out += "dataset: " + name + "  questions: " + std::to_string(s.questions) +
         "  failed: " + std::to_string(s.failed) + "\n";
  row("total   ", total);
  for (const auto& [lvl, a] : s.per_level) row(lvl.empty() ? "(none)  " : lvl + "  ", a);
  return out;
}

}  // namespace daf
