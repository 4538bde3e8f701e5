#pragma once
// Per-sentiment highway + linear rating heads and the fused overall rating.

#include "carp/common.hpp"

#include <nlohmann/json.hpp>

#include <random>

namespace carp {

/// Parameters of one sentiment's head (views into the stacked model arrays).
template <class T>
struct HeadView {
  Eigen::Ref<const Matrix<T>> h1;  // k x k
  Eigen::Ref<const Vector<T>> b1;
  Eigen::Ref<const Matrix<T>> h2;  // k x k
  Eigen::Ref<const Vector<T>> b2;
  Eigen::Ref<const Vector<T>> w;
  T b3;
};

template <class T>
struct HighwayCache {
  Vector<T> eta;
  Vector<T> carry;  // tanh(H2 o + b2)
  Vector<T> h;
};

/// η = σ(H1 o + b1); h = η ⊙ o + (1 − η) ⊙ tanh(H2 o + b2)
template <class T>
HighwayCache<T> highway_forward(const Vector<T>& o, const HeadView<T>& p) {
  HighwayCache<T> c;
  c.eta = (p.h1 * o + p.b1).unaryExpr([](T v) { return sigmoid(v); });
  c.carry = (p.h2 * o + p.b2).array().tanh();
  c.h = c.eta.cwiseProduct(o) + (T(1) - c.eta.array()).matrix().cwiseProduct(c.carry);
  return c;
}

template <class T>
Vector<T> highway(const Vector<T>& o, const HeadView<T>& p) {
  return highway_forward(o, p).h;
}

template <class T>
T sentiment_rating(const Vector<T>& h, const Eigen::Ref<const Vector<T>>& w, T b3) {
  return w.dot(h) + b3;
}

/// f_C(x) = 1 + (C − 1) / (1 + e^{−x})
template <class T>
T rating_squash(T x, T max_rating) {
  return T(1) + (max_rating - T(1)) * sigmoid(x);
}

/// Everything needed to recompute the overall rating and to explain it.
struct PredictionBreakdown {
  double r_pos = 0, r_neg = 0;
  double len_pos = 0, len_neg = 0;
  double user_bias = 0, item_bias = 0;
  double max_rating = 5;
  double rating = 0;
  bool cold = false;
  // 2 x (M*M) coupling coefficients of the final routing iteration.
  std::vector<std::vector<double>> coupling;

  double fused() const { return r_pos * len_pos - r_neg * len_neg; }
  double recompute() const { return rating_squash(fused(), max_rating) + user_bias + item_bias; }
};

template <class T>
T overall_rating(T r_pos, T len_pos, T r_neg, T len_neg, T user_bias, T item_bias, T max_rating) {
  return rating_squash(r_pos * len_pos - r_neg * len_neg, max_rating) + user_bias + item_bias;
}

inline nlohmann::json to_json(const PredictionBreakdown& b) {
  return {{"r_pos", b.r_pos},       {"r_neg", b.r_neg},         {"len_o_pos", b.len_pos},
          {"len_o_neg", b.len_neg}, {"user_bias", b.user_bias}, {"item_bias", b.item_bias},
          {"max_rating", b.max_rating}, {"rating", b.rating},  {"cold", b.cold},
          {"coupling", b.coupling}};
}

}  // namespace carp
