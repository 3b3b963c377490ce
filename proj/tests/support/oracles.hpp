#pragma once

// Independent reference implementations used as test oracles. These follow
// the mathematical definitions directly and deliberately share no code with
// the library paths they check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace oracle {

// Softmax without the max-shift rearrangement the library uses; agreement is
// checked to 1e-12, not bitwise.
inline std::vector<double> softmax_direct(const std::vector<double>& logits) {
  std::vector<double> e(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    e[i] = std::exp(logits[i]);
    total += e[i];
  }
  for (auto& v : e) v /= total;
  return e;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Diversity from the ordered-pair double loop: 1 - sum_{i != j} e(d_i, d_j) / (K^2 - K).
template <typename PairScore>
double diversity_ordered_pairs(std::size_t k, PairScore&& score) {
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      if (i != j) total += score(i, j) / static_cast<double>(k * k - k);
  return 1.0 - total;
}

struct LabeledScore {
  double p_c;
  bool is_distractor;
};

struct PrPoint {
  double threshold;
  double precision;
  double recall;
  double f1;
};

// Exhaustive enumeration: every distinct score plus 0 and one-past-max as
// thresholds, confusion counts by direct scan, incorrect-positive framing
// (predicted incorrect when p_c < t).
inline std::vector<PrPoint> pr_enumerate(const std::vector<LabeledScore>& items) {
  std::vector<double> thresholds;
  thresholds.push_back(0.0);
  double top = -std::numeric_limits<double>::infinity();
  for (const auto& it : items) {
    thresholds.push_back(it.p_c);
    top = std::max(top, it.p_c);
  }
  thresholds.push_back(std::nextafter(top, std::numeric_limits<double>::infinity()));
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  std::size_t total_distractors = 0;
  for (const auto& it : items)
    if (it.is_distractor) ++total_distractors;

  std::vector<PrPoint> out;
  for (double t : thresholds) {
    std::size_t tp = 0, fp = 0;
    for (const auto& it : items) {
      if (it.p_c < t) {
        if (it.is_distractor)
          ++tp;
        else
          ++fp;
      }
    }
    PrPoint p{};
    p.threshold = t;
    p.precision = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    p.recall = static_cast<double>(tp) / static_cast<double>(total_distractors);
    p.f1 = (p.precision + p.recall) > 0.0
               ? 2.0 * p.precision * p.recall / (p.precision + p.recall)
               : 0.0;
    out.push_back(p);
  }
  return out;
}

inline PrPoint pr_best(const std::vector<PrPoint>& curve) {
  PrPoint best = curve.front();
  for (const auto& p : curve)
    if (p.f1 > best.f1) best = p;  // ties keep the earlier (lower) threshold
  return best;
}

// Capture fraction by direct counting.
inline double capture_fraction(const std::vector<LabeledScore>& items, bool distractor, double t) {
  std::size_t total = 0, captured = 0;
  for (const auto& it : items) {
    if (it.is_distractor != distractor) continue;
    ++total;
    if (it.p_c < t) ++captured;
  }
  return total > 0 ? static_cast<double>(captured) / static_cast<double>(total) : 0.0;
}

// Closed-form Spearman for tie-free data: 1 - 6*sum(d^2) / (n(n^2-1)).
inline double spearman_closed_form(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  auto rank_of = [](const std::vector<double>& v) {
    std::vector<int> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      int rank = 1;
      for (std::size_t j = 0; j < v.size(); ++j)
        if (v[j] < v[i]) ++rank;
      r[i] = rank;
    }
    return r;
  };
  const auto rx = rank_of(x);
  const auto ry = rank_of(y);
  double d2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = rx[i] - ry[i];
    d2 += d * d;
  }
  const double nd = static_cast<double>(n);
  return 1.0 - 6.0 * d2 / (nd * (nd * nd - 1.0));
}

// Fractional-rank reference for tied data: ranks via per-element counting,
// then Pearson on the ranks.
inline double spearman_fractional_reference(const std::vector<double>& x,
                                            const std::vector<double>& y) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      std::size_t below = 0, equal = 0;
      for (std::size_t j = 0; j < v.size(); ++j) {
        if (v[j] < v[i]) ++below;
        if (v[j] == v[i]) ++equal;
      }
      // ranks below+1 .. below+equal are shared; their mean:
      r[i] = static_cast<double>(below) + (static_cast<double>(equal) + 1.0) / 2.0;
    }
    return r;
  };
  const auto rx = ranks(x);
  const auto ry = ranks(y);
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
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

// Direct binning: floor(v * bins), clamped into the last bin.
inline std::vector<std::size_t> histogram_direct(const std::vector<double>& values, int bins) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
  for (double v : values) {
    auto b = static_cast<std::size_t>(v * bins);
    if (b >= counts.size()) b = counts.size() - 1;
    ++counts[b];
  }
  return counts;
}

}  // namespace oracle
