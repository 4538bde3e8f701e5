#pragma once
// Rating regression loss, margin sentiment losses and their fusion.

#include "carp/common.hpp"

#include <algorithm>
#include <span>

namespace carp {

struct LossConfig {
  double lambda = 0.5;
  double epsilon = 0.8;
  bool mutual_exclusion = true;  // false drops the opposite-capsule term
};

template <class T>
T loss_sqr(std::span<const T> predictions, std::span<const T> ratings) {
  if (predictions.empty()) throw Error("loss_sqr on an empty batch");
  CARP_ASSERT(predictions.size() == ratings.size(), "prediction/rating count mismatch");
  T acc = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) acc += (predictions[i] - ratings[i]) * (predictions[i] - ratings[i]);
  return acc / static_cast<T>(predictions.size());
}

/// Per-pair margin loss on the capsule output lengths: the labelled capsule
/// must reach `epsilon`; with mutual exclusion the other must stay below
/// 1 − epsilon.
template <class T>
T sentiment_margin(T len_pos, T len_neg, Sentiment label, T epsilon, bool mutual_exclusion = true) {
  const T own = label == Sentiment::kPos ? len_pos : len_neg;
  const T other = label == Sentiment::kPos ? len_neg : len_pos;
  T l = std::max(T(0), epsilon - own);
  if (mutual_exclusion) l += std::max(T(0), other - T(1) + epsilon);
  return l;
}

struct CapsuleLengths {
  double pos = 0, neg = 0;
  Sentiment label = Sentiment::kPos;
};

/// Batch mean of sentiment_margin.
inline double loss_stm(std::span<const CapsuleLengths> batch, double epsilon, bool mutual_exclusion = true) {
  if (batch.empty()) throw Error("loss_stm on an empty batch");
  double acc = 0;
  for (const auto& b : batch) acc += sentiment_margin(b.pos, b.neg, b.label, epsilon, mutual_exclusion);
  return acc / static_cast<double>(batch.size());
}

template <class T>
T total_loss(T l_sqr, T l_stm, T lambda) {
  CARP_ASSERT(lambda >= T(0) && lambda <= T(1), "lambda must lie in [0, 1]");
  return lambda * l_sqr + (T(1) - lambda) * l_stm;
}

}  // namespace carp
