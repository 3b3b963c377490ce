#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "daf/io.hpp"

namespace daf {

// One multiple-choice reading-comprehension item: a context passage, a
// question, an ordered option list with exactly one correct answer, and
// optionally a difficulty tag and the fraction of human candidates who
// picked each option.
struct Question {
  std::string id;
  std::string context;
  std::string question;
  std::vector<std::string> options;
  int answer_index = 0;
  std::optional<std::string> level;
  std::optional<std::vector<double>> candidate_distribution;

  int num_options() const { return static_cast<int>(options.size()); }

  const std::string& answer_text() const { return options.at(static_cast<size_t>(answer_index)); }

  std::vector<int> distractor_indices() const {
    std::vector<int> out;
    out.reserve(options.size() > 0 ? options.size() - 1 : 0);
    for (int i = 0; i < num_options(); ++i)
      if (i != answer_index) out.push_back(i);
    return out;
  }

  std::vector<std::string> distractor_texts() const {
    std::vector<std::string> out;
    for (int i : distractor_indices()) out.push_back(options[static_cast<size_t>(i)]);
    return out;
  }
};

// Immutable after construction via make_question_set; safe to share across
// concurrent readers.
struct QuestionSet {
  std::string name;
  std::vector<Question> questions;
  std::map<std::string, std::vector<std::string>> level_index;  // level tag -> ids ("" = untagged)

  bool empty() const { return questions.empty(); }
  std::size_t size() const { return questions.size(); }
};

struct CorpusStats {
  std::map<std::string, std::size_t> questions_per_level;
  std::map<std::string, std::size_t> contexts_per_level;  // distinct context strings per level
  std::size_t total_questions = 0;
  std::size_t total_contexts = 0;  // sum over levels
};

enum class DatasetFormat { native_jsonl, race_style, cmcqrd_style };

inline std::string to_string(DatasetFormat f) {
  switch (f) {
    case DatasetFormat::native_jsonl: return "native-jsonl";
    case DatasetFormat::race_style: return "race-style";
    case DatasetFormat::cmcqrd_style: return "cmcqrd-style";
  }
  return "?";
}

inline DatasetFormat dataset_format_from_string(const std::string& s) {
  if (s == "native-jsonl") return DatasetFormat::native_jsonl;
  if (s == "race-style") return DatasetFormat::race_style;
  if (s == "cmcqrd-style") return DatasetFormat::cmcqrd_style;
  throw std::invalid_argument("unrecognized dataset format: " + s);
}

// Invariant checks for a single question. Violations are returned as data so
// degenerate records (e.g. duplicate option texts) can still be scored.
inline std::vector<std::string> validate_question(const Question& q) {
  std::vector<std::string> out;
  const int n = q.num_options();
  if (n < 2) out.push_back("too few options: " + std::to_string(n));
  if (q.answer_index < 0 || q.answer_index >= n)
    out.push_back("answer index out of range: " + std::to_string(q.answer_index) +
                  " (options: " + std::to_string(n) + ")");
  for (int i = 0; i < n; ++i)
    if (q.options[static_cast<size_t>(i)].empty()) out.push_back("empty option: " + std::to_string(i));
  // Exact-string duplicate detection; one violation per duplicated text.
  std::map<std::string, std::vector<int>> by_text;
  for (int i = 0; i < n; ++i) by_text[q.options[static_cast<size_t>(i)]].push_back(i);
  std::vector<const std::vector<int>*> groups;
  for (const auto& [text, idxs] : by_text)
    if (idxs.size() > 1) groups.push_back(&idxs);
  std::sort(groups.begin(), groups.end(),
            [](const auto* a, const auto* b) { return a->front() < b->front(); });
  for (const auto* g : groups) {
    std::string msg = "duplicate options: ";
    for (std::size_t k = 0; k < g->size(); ++k) {
      if (k) msg += ",";
      msg += std::to_string((*g)[k]);
    }
    out.push_back(msg);
  }
  if (q.candidate_distribution) {
    const auto& cd = *q.candidate_distribution;
    if (static_cast<int>(cd.size()) != n) {
      out.push_back("candidate distribution length " + std::to_string(cd.size()) +
                    " != options " + std::to_string(n));
    } else {
      double sum = 0.0;
      for (std::size_t i = 0; i < cd.size(); ++i) {
        if (!(cd[i] >= 0.0 && cd[i] <= 1.0))
          out.push_back("candidate entry out of range: " + std::to_string(i));
        sum += cd[i];
      }
      if (std::abs(sum - 1.0) > 0.01)
        out.push_back("candidate distribution sum off by more than 0.01: " + std::to_string(sum));
    }
  }
  return out;
}

namespace detail {

// Published candidate distributions carry rounding error; scale to sum 1 when
// within the 0.01 tolerance. Skips the division when already within 1e-12 so
// save/load round trips keep values bit-identical.
inline void renormalize_fractions(std::vector<double>& v, const std::string& where) {
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!(v[i] >= 0.0 && v[i] <= 1.0))
      throw std::runtime_error(where + ": candidate entry out of range at index " + std::to_string(i));
    sum += v[i];
  }
  if (std::abs(sum - 1.0) > 0.01)
    throw std::runtime_error(where + ": candidate distribution sums to " + std::to_string(sum) +
                             " (|sum-1| > 0.01)");
  if (std::abs(sum - 1.0) > 1e-12)
    for (auto& x : v) x /= sum;
}

// CMCQRD-subset records carry either fractions or raw selection counts; the
// encoding is not fixed, so both are accepted. Counts (sum well above 1) are
// normalized by their sum.
inline void normalize_counts_or_fractions(std::vector<double>& v, const std::string& where) {
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!(v[i] >= 0.0))
      throw std::runtime_error(where + ": negative candidate entry at index " + std::to_string(i));
    sum += v[i];
  }
  if (sum >= 1.0 - 0.01 && sum <= 1.0 + 0.01) {
    renormalize_fractions(v, where);
    return;
  }
  if (sum > 1.0 + 0.01) {
    for (auto& x : v) x /= sum;
    return;
  }
  throw std::runtime_error(where + ": candidate distribution sums to " + std::to_string(sum) +
                           " (neither fractions near 1 nor counts)");
}

inline void require_loadable(const Question& q, const std::string& where) {
  for (const auto& v : validate_question(q)) {
    // Duplicate option texts are reported by validate_question but are not a
    // load error: the diversity metric must be able to score them.
    if (v.rfind("duplicate options:", 0) == 0) continue;
    throw std::runtime_error(where + ": " + v);
  }
}

inline int answer_letter_to_index(const std::string& s, const std::string& where) {
  if (s.size() == 1 && s[0] >= 'A' && s[0] <= 'Z') return s[0] - 'A';
  if (s.size() == 1 && s[0] >= 'a' && s[0] <= 'z') return s[0] - 'a';
  throw std::runtime_error(where + ": unrecognized answer letter '" + s + "'");
}

}  // namespace detail

// Native interchange record: one JSON object per line with the exact field
// names of Question; optional fields omitted when absent.
inline nlohmann::ordered_json question_to_json(const Question& q) {
  nlohmann::ordered_json j;
  j["id"] = q.id;
  j["context"] = q.context;
  j["question"] = q.question;
  j["options"] = q.options;
  j["answer_index"] = q.answer_index;
  if (q.level) j["level"] = *q.level;
  if (q.candidate_distribution) j["candidate_distribution"] = *q.candidate_distribution;
  return j;
}

inline Question question_from_json(const nlohmann::json& j, const std::string& where) {
  Question q;
  try {
    q.id = j.at("id").get<std::string>();
    q.context = j.at("context").get<std::string>();
    q.question = j.at("question").get<std::string>();
    q.options = j.at("options").get<std::vector<std::string>>();
    q.answer_index = j.at("answer_index").get<int>();
    if (j.contains("level") && !j["level"].is_null()) q.level = j["level"].get<std::string>();
    if (j.contains("candidate_distribution") && !j["candidate_distribution"].is_null())
      q.candidate_distribution = j["candidate_distribution"].get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(where + ": malformed record: " + e.what());
  }
  const std::string ctx = where + (q.id.empty() ? "" : " (id '" + q.id + "')");
  if (q.candidate_distribution) {
    if (q.candidate_distribution->size() != q.options.size())
      throw std::runtime_error(ctx + ": candidate distribution length " +
                               std::to_string(q.candidate_distribution->size()) + " != options " +
                               std::to_string(q.options.size()));
    detail::renormalize_fractions(*q.candidate_distribution, ctx);
  }
  detail::require_loadable(q, ctx);
  return q;
}

inline QuestionSet make_question_set(std::string name, std::vector<Question> questions) {
  QuestionSet set;
  set.name = std::move(name);
  set.questions = std::move(questions);
  std::set<std::string> seen;
  for (const auto& q : set.questions) {
    if (!seen.insert(q.id).second)
      throw std::runtime_error("duplicate question id: " + q.id);
    set.level_index[q.level.value_or("")].push_back(q.id);
  }
  return set;
}

namespace detail {

inline QuestionSet load_native_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path.string());
  std::vector<Question> qs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(where + ": invalid JSON: " + e.what());
    }
    qs.push_back(question_from_json(j, where));
  }
  return make_question_set(path.stem().string(), std::move(qs));
}

// RACE-style layout: per-level subfolders of JSON files, one passage per file
// with parallel questions/options/answers arrays and letter answers.
inline QuestionSet load_race_style(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root))
    throw std::runtime_error("not a directory: " + root.string());
  auto level_tag = [](const std::string& dir) -> std::string {
    if (dir == "middle") return "RACE-M";
    if (dir == "high") return "RACE-H";
    if (dir == "college") return "RACE-C";
    return dir;
  };
  std::vector<Question> qs;
  auto load_file = [&](const std::filesystem::path& file, const std::optional<std::string>& level,
                       const std::string& rel) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_text_file(file));
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(rel + ": invalid JSON: " + e.what());
    }
    try {
      const auto article = j.at("article").get<std::string>();
      const auto questions = j.at("questions").get<std::vector<std::string>>();
      const auto options = j.at("options").get<std::vector<std::vector<std::string>>>();
      const auto answers = j.at("answers").get<std::vector<std::string>>();
      if (questions.size() != options.size() || questions.size() != answers.size())
        throw std::runtime_error(rel + ": questions/options/answers lengths differ");
      for (std::size_t k = 0; k < questions.size(); ++k) {
        Question q;
        q.id = rel + "#" + std::to_string(k);
        q.context = article;
        q.question = questions[k];
        q.options = options[k];
        q.answer_index = answer_letter_to_index(answers[k], q.id);
        q.level = level;
        require_loadable(q, q.id);
        qs.push_back(std::move(q));
      }
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(rel + ": malformed record: " + e.what());
    }
  };
  std::vector<std::filesystem::path> subdirs, files;
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    if (entry.is_directory())
      subdirs.push_back(entry.path());
    else if (entry.is_regular_file())
      files.push_back(entry.path());
  }
  std::sort(subdirs.begin(), subdirs.end());
  std::sort(files.begin(), files.end());
  for (const auto& dir : subdirs) {
    std::vector<std::filesystem::path> level_files;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
      if (entry.is_regular_file()) level_files.push_back(entry.path());
    std::sort(level_files.begin(), level_files.end());
    const std::string tag = level_tag(dir.filename().string());
    for (const auto& f : level_files)
      load_file(f, tag, dir.filename().string() + "/" + f.filename().string());
  }
  for (const auto& f : files) load_file(f, std::nullopt, f.filename().string());
  return make_question_set(root.filename().string(), std::move(qs));
}

// CMCQRD-style file: a JSON array (or object with a "questions" array) of
// records; answers may be letters or indices, candidate distributions may be
// fractions or counts.
inline QuestionSet load_cmcqrd_style(const std::filesystem::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.filename().string() + ": invalid JSON: " + std::string(e.what()));
  }
  const nlohmann::json* records = &doc;
  if (doc.is_object()) {
    if (!doc.contains("questions"))
      throw std::runtime_error(path.filename().string() + ": expected an array or a 'questions' field");
    records = &doc["questions"];
  }
  if (!records->is_array())
    throw std::runtime_error(path.filename().string() + ": expected an array of records");
  std::vector<Question> qs;
  std::size_t n = 0;
  for (const auto& r : *records) {
    ++n;
    const std::string where = path.filename().string() + " record " + std::to_string(n);
    Question q;
    try {
      q.id = r.contains("id") ? r["id"].get<std::string>() : "q" + std::to_string(n);
      if (r.contains("context"))
        q.context = r["context"].get<std::string>();
      else
        q.context = r.at("text").get<std::string>();
      q.question = r.at("question").get<std::string>();
      q.options = r.at("options").get<std::vector<std::string>>();
      if (r.contains("answer_index"))
        q.answer_index = r["answer_index"].get<int>();
      else
        q.answer_index = answer_letter_to_index(r.at("answer").get<std::string>(), where);
      if (r.contains("level") && !r["level"].is_null()) q.level = r["level"].get<std::string>();
      if (r.contains("candidate_distribution") && !r["candidate_distribution"].is_null())
        q.candidate_distribution = r["candidate_distribution"].get<std::vector<double>>();
      else if (r.contains("candidate_counts") && !r["candidate_counts"].is_null())
        q.candidate_distribution = r["candidate_counts"].get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(where + ": malformed record: " + e.what());
    }
    const std::string ctx = where + " (id '" + q.id + "')";
    if (q.candidate_distribution) {
      if (q.candidate_distribution->size() != q.options.size())
        throw std::runtime_error(ctx + ": candidate distribution length " +
                                 std::to_string(q.candidate_distribution->size()) + " != options " +
                                 std::to_string(q.options.size()));
      normalize_counts_or_fractions(*q.candidate_distribution, ctx);
    }
    require_loadable(q, ctx);
    qs.push_back(std::move(q));
  }
  return make_question_set(path.stem().string(), std::move(qs));
}

}  // namespace detail

inline QuestionSet load_dataset(const std::filesystem::path& path, DatasetFormat format) {
  switch (format) {
    case DatasetFormat::native_jsonl: return detail::load_native_jsonl(path);
    case DatasetFormat::race_style: return detail::load_race_style(path);
    case DatasetFormat::cmcqrd_style: return detail::load_cmcqrd_style(path);
  }
  throw std::invalid_argument("unrecognized dataset format");
}

inline void save_dataset(const QuestionSet& set, const std::filesystem::path& path) {
  std::string out;
  for (const auto& q : set.questions) {
    out += question_to_json(q).dump();
    out += '\n';
  }
  atomic_write_text(path, out);
}

inline CorpusStats corpus_stats(const QuestionSet& set) {
  CorpusStats stats;
  std::map<std::string, std::set<std::string>> contexts;
  for (const auto& q : set.questions) {
    const std::string lvl = q.level.value_or("");
    stats.questions_per_level[lvl]++;
    contexts[lvl].insert(q.context);
  }
  for (const auto& [lvl, ctxs] : contexts) stats.contexts_per_level[lvl] = ctxs.size();
  for (const auto& [lvl, n] : stats.questions_per_level) stats.total_questions += n;
  for (const auto& [lvl, n] : stats.contexts_per_level) stats.total_contexts += n;
  return stats;
}

}  // namespace daf
