#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "daf/corpus.hpp"
#include "daf/metrics.hpp"
#include "daf/scoring.hpp"

namespace daf {

// One answer option with its binary-head score and its ground-truth role.
// The role comes from Question.answer_index only.
struct ScoredOption {
  enum class Label { distractor, answer };
  double p_c = 0.0;
  Label label = Label::distractor;
};

// Detector operating point. Precision/recall/F1 are for the "incorrect"
// class: an option is predicted incorrect when p_c < threshold. With no
// positive predictions, precision is 0 and so is F1.
struct OperatingPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct PrAnalysis {
  std::vector<OperatingPoint> curve;
  OperatingPoint best;  // max F1; ties break to the lowest threshold
};

namespace detail {

// Candidate thresholds: 0, every distinct score, and one step past the
// largest score. Under strict p_c < t these cover every achievable confusion
// matrix.
inline std::vector<double> candidate_thresholds(std::span<const ScoredOption> items) {
  std::vector<double> t;
  t.reserve(items.size() + 2);
  t.push_back(0.0);
  for (const auto& it : items) t.push_back(it.p_c);
  const double top = *std::max_element(t.begin(), t.end());
  t.push_back(std::nextafter(top, std::numeric_limits<double>::infinity()));
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  return t;
}

inline OperatingPoint point_at(double t, std::size_t tp, std::size_t fp, std::size_t total_distractors) {
  OperatingPoint p;
  p.threshold = t;
  p.precision = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  p.recall = static_cast<double>(tp) / static_cast<double>(total_distractors);
  p.f1 = (p.precision + p.recall) > 0.0 ? 2.0 * p.precision * p.recall / (p.precision + p.recall)
                                        : 0.0;
  return p;
}

}  // namespace detail

inline PrAnalysis pr_curve(std::span<const ScoredOption> items) {
  std::size_t distractors = 0, answers = 0;
  for (const auto& it : items) (it.label == ScoredOption::Label::distractor ? distractors : answers)++;
  if (distractors == 0 || answers == 0)
    throw std::invalid_argument("pr_curve requires at least one item of each label");

  std::vector<ScoredOption> sorted(items.begin(), items.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoredOption& a, const ScoredOption& b) { return a.p_c < b.p_c; });

  PrAnalysis out;
  std::size_t idx = 0, tp = 0, fp = 0;
  for (double t : detail::candidate_thresholds(items)) {
    while (idx < sorted.size() && sorted[idx].p_c < t) {
      (sorted[idx].label == ScoredOption::Label::distractor ? tp : fp)++;
      ++idx;
    }
    const auto p = detail::point_at(t, tp, fp, distractors);
    out.curve.push_back(p);
    if (out.curve.size() == 1 || p.f1 > out.best.f1) out.best = p;
  }
  return out;
}

// Same analysis with "correct" as the positive class (predicted correct when
// p_c >= threshold), for readers who expect the opposite orientation.
inline PrAnalysis pr_curve_correct_positive(std::span<const ScoredOption> items) {
  std::size_t distractors = 0, answers = 0;
  for (const auto& it : items) (it.label == ScoredOption::Label::distractor ? distractors : answers)++;
  if (distractors == 0 || answers == 0)
    throw std::invalid_argument("pr_curve requires at least one item of each label");

  PrAnalysis out;
  for (double t : detail::candidate_thresholds(items)) {
    std::size_t tp = 0, fp = 0;
    for (const auto& it : items) {
      if (it.p_c >= t) (it.label == ScoredOption::Label::answer ? tp : fp)++;
    }
    OperatingPoint p;
    p.threshold = t;
    p.precision = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    p.recall = static_cast<double>(tp) / static_cast<double>(answers);
    p.f1 = (p.precision + p.recall) > 0.0 ? 2.0 * p.precision * p.recall / (p.precision + p.recall)
                                          : 0.0;
    out.curve.push_back(p);
    if (out.curve.size() == 1 || p.f1 > out.best.f1) out.best = p;
  }
  return out;
}

struct OperatingChartRow {
  double threshold = 0.0;
  double distractor_capture = 0.0;  // fraction of distractors with p_c < threshold
  double answer_capture = 0.0;      // fraction of answers with p_c < threshold
};

// Cumulative capture fractions per label as the threshold sweeps the grid.
inline std::vector<OperatingChartRow> operating_chart(std::span<const ScoredOption> items,
                                                      std::span<const double> grid) {
  std::size_t distractors = 0, answers = 0;
  for (const auto& it : items) (it.label == ScoredOption::Label::distractor ? distractors : answers)++;
  std::vector<OperatingChartRow> rows;
  rows.reserve(grid.size());
  for (double t : grid) {
    std::size_t cd = 0, ca = 0;
    for (const auto& it : items)
      if (it.p_c < t) (it.label == ScoredOption::Label::distractor ? cd : ca)++;
    OperatingChartRow row;
    row.threshold = t;
    row.distractor_capture =
        distractors > 0 ? static_cast<double>(cd) / static_cast<double>(distractors) : 0.0;
    row.answer_capture = answers > 0 ? static_cast<double>(ca) / static_cast<double>(answers) : 0.0;
    rows.push_back(row);
  }
  return rows;
}

// Fractional (average) ranks, 1-based; tied values share the mean of the
// ranks they span.
inline std::vector<double> fractional_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

// Spearman rank correlation with fractional ranks for ties. Undefined
// (nullopt) when either list has zero rank variance.
inline std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("spearman: length mismatch");
  if (x.size() < 2) throw std::invalid_argument("spearman: need at least 2 values");
  const auto rx = fractional_ranks(x);
  const auto ry = fractional_ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    const double dx = rx[i] - mx;
    const double dy = ry[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

struct IntraQuestionCorrelation {
  std::optional<double> mean_rho;  // mean over questions with a defined rho
  std::size_t used = 0;
  std::size_t excluded_undefined = 0;  // defined inputs, zero rank variance
  std::size_t skipped_ineligible = 0;  // no candidate distribution or < 2 distractors
};

// Per question: rank agreement between the system's distractor confidences
// and the human candidate fractions for the same distractors.
inline IntraQuestionCorrelation intra_question_correlation(const QuestionSet& set,
                                                           const BackendList& backends) {
  IntraQuestionCorrelation out;
  double sum = 0.0;
  for (const auto& q : set.questions) {
    const auto d = q.distractor_indices();
    if (!q.candidate_distribution || d.size() < 2) {
      ++out.skipped_ineligible;
      continue;
    }
    const auto conf = ensemble_confidences(backends, q);
    std::vector<double> sys, human;
    for (int i : d) {
      sys.push_back(conf.probs[static_cast<size_t>(i)]);
      human.push_back((*q.candidate_distribution)[static_cast<size_t>(i)]);
    }
    const auto rho = spearman(sys, human);
    if (!rho) {
      ++out.excluded_undefined;
      continue;
    }
    sum += *rho;
    ++out.used;
  }
  if (out.used == 0) throw std::runtime_error("intra_question_correlation: no eligible questions");
  out.mean_rho = sum / static_cast<double>(out.used);
  return out;
}

struct InterQuestionCorrelation {
  std::optional<double> rho;  // nullopt when either series has zero rank variance
  std::size_t questions = 0;
};

// Across questions: rank agreement between system plausibility and candidate
// plausibility.
inline InterQuestionCorrelation inter_question_correlation(const QuestionSet& set,
                                                           const BackendList& backends) {
  std::vector<double> sys, human;
  for (const auto& q : set.questions) {
    if (!q.candidate_distribution) continue;
    sys.push_back(plausibility(ensemble_confidences(backends, q)));
    human.push_back(candidate_plausibility(q));
  }
  if (sys.size() < 2)
    throw std::runtime_error("inter_question_correlation: fewer than 2 eligible questions");
  InterQuestionCorrelation out;
  out.questions = sys.size();
  out.rho = spearman(sys, human);
  return out;
}

}  // namespace daf
