#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "tomdecomp/core.hpp"

namespace tomdecomp {

/// Area under the ROC curve as the Mann-Whitney statistic: the fraction of
/// (positive, negative) pairs ordered correctly, ties counting one half.
/// Accumulated as an integer count of half-pairs so the result is exact.
template <typename Label>
double auc_roc(std::span<const double> scores, std::span<const Label> labels) {
  if (scores.size() != labels.size())
    throw Error("probe", "auc_roc: " + std::to_string(scores.size()) + " scores vs " +
                             std::to_string(labels.size()) + " labels");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::uint64_t n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (std::isnan(scores[i])) throw Error("probe", "auc_roc: NaN score");
    (labels[i] ? n_pos : n_neg)++;
  }
  if (n_pos == 0 || n_neg == 0) throw Error("probe", "auc_roc needs both positive and negative labels");

  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::uint64_t half_pairs = 0;  // 2 * U
  std::uint64_t neg_below = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t p = 0, q = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] ? p : q)++;
      ++j;
    }
    half_pairs += p * (2 * neg_below + q);
    neg_below += q;
    i = j;
  }
  return static_cast<double>(half_pairs) / static_cast<double>(2 * n_pos * n_neg);
}

inline double auc_roc(const std::vector<double>& scores, const std::vector<int>& labels) {
  return auc_roc(std::span<const double>(scores), std::span<const int>(labels));
}

struct Confusion {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

template <typename Label>
Confusion confusion(std::span<const Label> predictions, std::span<const Label> labels) {
  if (predictions.size() != labels.size())
    throw Error("probe", "f1_score: " + std::to_string(predictions.size()) + " predictions vs " +
                             std::to_string(labels.size()) + " labels");
  Confusion c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool p = predictions[i] != 0, y = labels[i] != 0;
    if (p && y) ++c.tp;
    else if (p) ++c.fp;
    else if (y) ++c.fn;
    else ++c.tn;
  }
  return c;
}

/// Harmonic mean of precision and recall, written as 2TP / (2TP + FP + FN);
/// zero when there are no true positives.
template <typename Label>
double f1_score(std::span<const Label> predictions, std::span<const Label> labels) {
  const auto c = confusion(predictions, labels);
  if (c.tp == 0) return 0.0;
  return static_cast<double>(2 * c.tp) / static_cast<double>(2 * c.tp + c.fp + c.fn);
}

inline double f1_score(const std::vector<int>& predictions, const std::vector<int>& labels) {
  return f1_score(std::span<const int>(predictions), std::span<const int>(labels));
}

}  // namespace tomdecomp
