#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "daf/corpus.hpp"
#include "daf/io.hpp"
#include "daf/pipeline.hpp"

namespace daf {

enum class ProbeQuality { plausibility, diversity };
enum class ProbeDirection { increase, decrease };

struct ProbeDirective {
  ProbeQuality quality = ProbeQuality::plausibility;
  ProbeDirection direction = ProbeDirection::increase;
};

inline std::string to_string(ProbeDirective d) {
  std::string s = d.quality == ProbeQuality::plausibility ? "plaus" : "div";
  s += d.direction == ProbeDirection::increase ? "+" : "-";
  return s;
}

inline ProbeDirective probe_directive_from_string(const std::string& s) {
  if (s == "plaus+") return {ProbeQuality::plausibility, ProbeDirection::increase};
  if (s == "plaus-") return {ProbeQuality::plausibility, ProbeDirection::decrease};
  if (s == "div+") return {ProbeQuality::diversity, ProbeDirection::increase};
  if (s == "div-") return {ProbeQuality::diversity, ProbeDirection::decrease};
  throw std::invalid_argument("unrecognized directive: " + s + " (use plaus+/plaus-/div+/div-)");
}

inline std::string directive_goal(ProbeDirective d) {
  const std::string more = d.direction == ProbeDirection::increase ? "more" : "less";
  return more + (d.quality == ProbeQuality::plausibility ? " plausible" : " diverse");
}

// Prompt templates are configuration. Placeholders: {context} {question}
// {options} {answer_number} {answer_text} {k} {goal}.
struct PromptTemplate {
  std::string text;
};

inline PromptTemplate default_probe_template() {
  return PromptTemplate{
      "Read the passage and the multiple-choice question below.\n"
      "\n"
      "Passage:\n"
      "{context}\n"
      "\n"
      "Question:\n"
      "{question}\n"
      "\n"
      "Options:\n"
      "{options}\n"
      "\n"
      "The correct answer is option {answer_number}: {answer_text}\n"
      "\n"
      "Rewrite the {k} incorrect options so that they are {goal}. Keep the correct "
      "answer unchanged. Reply with exactly {k} replacement options as a numbered "
      "list (1. to {k}.), one per line, and nothing else.\n"};
}

inline std::string numbered_list(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i)
    out += std::to_string(i + 1) + ". " + items[i] + "\n";
  return out;
}

namespace detail {

inline void replace_all(std::string& s, const std::string& from, const std::string& to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

}  // namespace detail

inline std::string build_probe_prompt(const Question& q, ProbeDirective directive,
                                      const PromptTemplate& tmpl = default_probe_template()) {
  const std::size_t k = q.distractor_indices().size();
  std::string out = tmpl.text;
  detail::replace_all(out, "{context}", q.context);
  detail::replace_all(out, "{question}", q.question);
  detail::replace_all(out, "{options}", numbered_list(q.options));
  detail::replace_all(out, "{answer_number}", std::to_string(q.answer_index + 1));
  detail::replace_all(out, "{answer_text}", q.answer_text());
  detail::replace_all(out, "{k}", std::to_string(k));
  detail::replace_all(out, "{goal}", directive_goal(directive));
  return out;
}

inline std::string template_hash(const PromptTemplate& tmpl) { return to_hex(fnv1a64(tmpl.text)); }

// Extracts the first consecutive numbered run 1., 2., ... from a response.
// Accepts "N." or "N)", skips blank lines inside the run, and ignores
// anything after the run ends. Returns nullopt unless the run has exactly
// expected_count non-empty items.
inline std::optional<std::vector<std::string>> parse_numbered_list(const std::string& response,
                                                                   std::size_t expected_count) {
  std::vector<std::string> items;
  std::size_t pos = 0;
  bool in_run = false;
  while (pos <= response.size()) {
    const std::size_t eol = std::min(response.find('\n', pos), response.size());
    const std::string_view line = trim(std::string_view(response).substr(pos, eol - pos));
    pos = eol + 1;
    if (line.empty()) {
      if (pos > response.size()) break;
      continue;  // blank lines never end the run
    }
    std::size_t digits = 0;
    while (digits < line.size() && std::isdigit(static_cast<unsigned char>(line[digits]))) ++digits;
    const bool numbered = digits > 0 && digits < line.size() &&
                          (line[digits] == '.' || line[digits] == ')');
    if (numbered) {
      const std::size_t number = std::stoul(std::string(line.substr(0, digits)));
      if (!in_run && number == 1) {
        in_run = true;
        items.emplace_back(trim(line.substr(digits + 1)));
        continue;
      }
      if (in_run && number == items.size() + 1) {
        items.emplace_back(trim(line.substr(digits + 1)));
        continue;
      }
    }
    if (in_run) break;  // run ended; the rest is commentary
  }
  if (items.size() != expected_count) return std::nullopt;
  for (const auto& item : items)
    if (item.empty()) return std::nullopt;
  return items;
}

struct RefinedQuestion {
  enum class ParseStatus { ok, failed };
  std::string original_id;
  ProbeDirective directive;
  std::vector<std::string> distractors;  // exactly K when ok
  std::string raw_response;
  ParseStatus parse_status = ParseStatus::failed;

  // Rebuilds the question with the answer in its original position and the
  // replacement distractors filling the other slots in order. Falls back to
  // the original distractors when parsing failed.
  Question to_question(const Question& original) const {
    Question out = original;
    if (parse_status != ParseStatus::ok) return out;
    std::size_t next = 0;
    for (int i : original.distractor_indices())
      out.options[static_cast<size_t>(i)] = distractors[next++];
    return out;
  }
};

inline RefinedQuestion apply_refinement(const Question& q, const std::string& response,
                                        ProbeDirective directive) {
  RefinedQuestion r;
  r.original_id = q.id;
  r.directive = directive;
  r.raw_response = response;
  const auto parsed = parse_numbered_list(response, q.distractor_indices().size());
  if (parsed) {
    r.distractors = *parsed;
    r.parse_status = RefinedQuestion::ParseStatus::ok;
  }
  return r;
}

// Behavior contract: complete(prompt) -> response text. Real clients read
// endpoint and credential from the environment; tests use scripted clients.
class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual std::string complete(const std::string& prompt) = 0;
};

// Replays canned responses keyed by the exact prompt. Prompts are built
// deterministically, so fixtures key on build_probe_prompt output.
class ScriptedLlmClient : public LlmClient {
 public:
  ScriptedLlmClient() = default;
  explicit ScriptedLlmClient(std::optional<std::string> default_response)
      : default_(std::move(default_response)) {}

  void set(const std::string& prompt, const std::string& response) { by_prompt_[prompt] = response; }

  std::string complete(const std::string& prompt) override {
    ++calls;
    const auto it = by_prompt_.find(prompt);
    if (it != by_prompt_.end()) return it->second;
    if (default_) return *default_;
    throw std::runtime_error("no scripted response for prompt");
  }

  std::size_t calls = 0;

 private:
  std::map<std::string, std::string> by_prompt_;
  std::optional<std::string> default_;
};

// No-op refinement: answers every prompt with the question's own distractors.
inline ScriptedLlmClient make_echo_client(const QuestionSet& set, ProbeDirective directive,
                                          const PromptTemplate& tmpl = default_probe_template()) {
  ScriptedLlmClient client;
  for (const auto& q : set.questions)
    client.set(build_probe_prompt(q, directive, tmpl), numbered_list(q.distractor_texts()));
  return client;
}

// Raw LLM responses on disk, one text file per key, so reruns are free and
// deterministic. Writes go through a temp file and a rename.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

  static std::string key(const std::string& question_id, ProbeDirective directive,
                         const std::string& tmpl_hash) {
    return to_hex(fnv1a64(question_id + "\x1f" + to_string(directive) + "\x1f" + tmpl_hash));
  }

  std::optional<std::string> get(const std::string& key) const {
    const auto path = dir_ / (key + ".txt");
    if (!std::filesystem::exists(path)) return std::nullopt;
    return read_text_file(path);
  }

  void put(const std::string& key, const std::string& response) const {
    atomic_write_text(dir_ / (key + ".txt"), response);
  }

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

struct ProbeSummary {
  ProbeDirective directive;
  std::size_t questions = 0;
  std::size_t parse_failures = 0;
  double accuracy_pct = 0.0;
  double mean_plausibility_pct = 0.0;
  std::optional<double> mean_diversity_pct;
};

struct ProbeResult {
  std::vector<RefinedQuestion> refinements;
  QuestionSet refined_set;
  RunResult run;  // pipeline run over the refined set
  ProbeSummary summary;
};

inline constexpr int kParseRetryBudget = 3;

// Refine every question's distractors through the client, substitute them,
// and measure the impact with the standard pipeline. Parse failures fall back
// to the original distractors and are tallied. A client exception aborts the
// run; responses cached so far stay on disk.
inline ProbeResult probe_corpus(const QuestionSet& set, ProbeDirective directive, LlmClient& client,
                                const PipelineConfig& cfg, const BackendList& backends,
                                const EquivalenceScorer& equivalence,
                                const ResponseCache* cache = nullptr,
                                const PromptTemplate& tmpl = default_probe_template()) {
  validate_config(cfg);
  const std::string th = template_hash(tmpl);
  ProbeResult result;
  std::vector<Question> refined;
  refined.reserve(set.size());
  for (const auto& q : set.questions) {
    const std::string key = ResponseCache::key(q.id, directive, th);
    std::optional<std::string> response = cache ? cache->get(key) : std::nullopt;
    RefinedQuestion r;
    if (response) {
      r = apply_refinement(q, *response, directive);
    } else {
      const std::string prompt = build_probe_prompt(q, directive, tmpl);
      std::string last;
      for (int attempt = 0; attempt < kParseRetryBudget; ++attempt) {
        std::string resp;
        try {
          resp = client.complete(prompt);
        } catch (const std::exception& e) {
          throw std::runtime_error("probe aborted at question '" + q.id + "': " + e.what());
        }
        r = apply_refinement(q, resp, directive);
        if (r.parse_status == RefinedQuestion::ParseStatus::ok) break;
        if (attempt > 0 && resp == last) break;  // deterministic client, retrying is futile
        last = resp;
      }
      if (cache) cache->put(key, r.raw_response);
    }
    if (r.parse_status != RefinedQuestion::ParseStatus::ok) ++result.summary.parse_failures;
    refined.push_back(r.to_question(q));
    result.refinements.push_back(std::move(r));
  }
  result.refined_set = make_question_set(set.name, std::move(refined));
  result.run = run_corpus(result.refined_set, cfg, backends, equivalence);
  result.summary.directive = directive;
  result.summary.questions = set.size();
  result.summary.accuracy_pct = result.run.summary.accuracy_pct;
  result.summary.mean_plausibility_pct = result.run.summary.mean_plausibility_pct;
  result.summary.mean_diversity_pct = result.run.summary.mean_diversity_pct;
  return result;
}

// Accuracy with every context replaced by the empty string: how far the
// backends get on the question and options alone.
inline double context_free_accuracy(const QuestionSet& set, const PipelineConfig& cfg,
                                    const BackendList& backends,
                                    const EquivalenceScorer& equivalence) {
  PipelineConfig cf = cfg;
  cf.context_free = true;
  return run_corpus(set, cf, backends, equivalence).summary.accuracy_pct;
}

struct SetComparison {
  double fraction = 0.0;  // aligned questions where quality(A) > quality(B), strictly
  std::size_t compared = 0;
  std::size_t greater = 0;
  std::size_t ties = 0;
  std::size_t skipped = 0;  // missing counterpart, failed, or undefined diversity
};

// Question-level comparison of two report sets aligned by id. Ties count as
// not greater; pairs with an undefined diversity on either side are skipped
// and tallied.
inline SetComparison compare_sets(const std::vector<QuestionReport>& a,
                                  const std::vector<QuestionReport>& b, ProbeQuality quality) {
  std::map<std::string, const QuestionReport*> by_id;
  for (const auto& r : b)
    if (!r.failed) by_id[r.id] = &r;
  SetComparison out;
  for (const auto& ra : a) {
    if (ra.failed) {
      ++out.skipped;
      continue;
    }
    const auto it = by_id.find(ra.id);
    if (it == by_id.end()) {
      ++out.skipped;
      continue;
    }
    const QuestionReport& rb = *it->second;
    double va = 0.0, vb = 0.0;
    if (quality == ProbeQuality::plausibility) {
      va = ra.plausibility;
      vb = rb.plausibility;
    } else {
      if (!ra.diversity.value || !rb.diversity.value) {
        ++out.skipped;
        continue;
      }
      va = *ra.diversity.value;
      vb = *rb.diversity.value;
    }
    ++out.compared;
    if (va > vb) ++out.greater;
    if (va == vb) ++out.ties;
  }
  if (out.compared == 0) throw std::runtime_error("compare_sets: no aligned questions");
  out.fraction = static_cast<double>(out.greater) / static_cast<double>(out.compared);
  return out;
}

// Equal-width bins over [0,1], right-exclusive except the last bin.
inline std::vector<std::size_t> score_histogram(std::span<const double> values, int bins) {
  if (bins < 1) throw std::invalid_argument("score_histogram: bins must be >= 1");
  std::vector<std::size_t> counts(static_cast<size_t>(bins), 0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = values[i];
    if (!(v >= 0.0 && v <= 1.0))
      throw std::invalid_argument("score_histogram: value out of [0,1] at index " +
                                  std::to_string(i) + ": " + std::to_string(v));
    auto bin = static_cast<std::size_t>(v * bins);
    if (bin >= static_cast<std::size_t>(bins)) bin = static_cast<std::size_t>(bins) - 1;
    ++counts[bin];
  }
  return counts;
}

inline nlohmann::ordered_json probe_summary_to_json(const ProbeSummary& s) {
  nlohmann::ordered_json j;
  j["type"] = "probe_summary";
  j["directive"] = to_string(s.directive);
  j["questions"] = s.questions;
  j["parse_failures"] = s.parse_failures;
  j["accuracy_pct"] = s.accuracy_pct;
  j["mean_plausibility_pct"] = s.mean_plausibility_pct;
  j["mean_diversity_pct"] =
      s.mean_diversity_pct ? nlohmann::ordered_json(*s.mean_diversity_pct) : nlohmann::ordered_json(nullptr);
  return j;
}

}  // namespace daf
