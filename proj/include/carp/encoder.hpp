#pragma once
// Word embedding lookup and "same"-padded windowed convolution with ReLU.

#include "carp/common.hpp"

#include <random>
#include <span>

namespace carp {

/// Rows of the embedding table for `tokens`; padding rows are zero because
/// row 0 of the table is kept at zero.
template <class T>
Matrix<T> embed(const Matrix<T>& table, std::span<const TokenId> tokens) {
  Matrix<T> out(static_cast<Eigen::Index>(tokens.size()), table.cols());
  for (std::size_t j = 0; j < tokens.size(); ++j) {
    const TokenId w = tokens[j];
    CARP_ASSERT(w >= 0 && w < table.rows(), "token index " + std::to_string(w) + " outside vocabulary of size " +
                                                std::to_string(table.rows()));
    out.row(static_cast<Eigen::Index>(j)) = table.row(w);
  }
  return out;
}

/// Window matrix: row j holds the c embedding rows centred at j, zero where
/// the window runs past either end of the first `len` rows.
template <class T>
Matrix<T> im2col(const Matrix<T>& embedded, int len, int window) {
  const Eigen::Index d = embedded.cols();
  const int half = (window - 1) / 2;
  Matrix<T> x = Matrix<T>::Zero(len, window * d);
  for (int j = 0; j < len; ++j)
    for (int o = 0; o < window; ++o) {
      const int src = j + o - half;
      if (src >= 0 && src < len) x.block(j, o * d, 1, d) = embedded.row(src);
    }
  return x;
}

template <class T>
struct ConvCache {
  int len = 0;
  Matrix<T> x;     // len x (c*d) window matrix
  Matrix<T> pre;   // len x n pre-activation
  Matrix<T> drop;  // len x n inverted-dropout multipliers (empty when inactive)
  Matrix<T> out;   // len x n contextual features
};

/// Convolution over the first `len` rows of `embedded`; `weight` is
/// n x (c*d) with window offsets laid out left to right, `bias` is 1 x n.
template <class T, class Rng = std::mt19937_64>
ConvCache<T> conv_forward(const Matrix<T>& embedded, int len, const Matrix<T>& weight, const Matrix<T>& bias,
                          int window, T keep_prob = T(1), Rng* rng = nullptr) {
  CARP_ASSERT(len >= 1, "convolution needs at least one position");
  CARP_ASSERT(window % 2 == 1, "window size must be odd");
  CARP_ASSERT(weight.cols() == window * embedded.cols(), "filter width does not match window * embedding size");
  ConvCache<T> c;
  c.len = len;
  c.x = im2col(embedded, len, window);
  c.pre = c.x * weight.transpose();
  c.pre.rowwise() += bias.row(0);
  c.out = c.pre.cwiseMax(T(0));
  if (rng != nullptr && keep_prob < T(1)) {
    std::bernoulli_distribution keep(static_cast<double>(keep_prob));
    c.drop.resize(c.out.rows(), c.out.cols());
    for (Eigen::Index i = 0; i < c.drop.size(); ++i) c.drop.data()[i] = keep(*rng) ? T(1) / keep_prob : T(0);
    c.out.array() *= c.drop.array();
  }
  return c;
}

/// Accumulates filter/bias gradients and returns d(embedded) for the first
/// `len` rows.
template <class T>
Matrix<T> conv_backward(const ConvCache<T>& c, const Matrix<T>& d_out, const Matrix<T>& weight, int window,
                        Matrix<T>& d_weight, Matrix<T>& d_bias) {
  Matrix<T> d_pre = (c.pre.array() > T(0)).select(d_out, T(0));
  if (c.drop.size() > 0) d_pre.array() *= c.drop.array();
  d_weight.noalias() += d_pre.transpose() * c.x;
  d_bias.row(0) += d_pre.colwise().sum();
  const Matrix<T> d_x = d_pre * weight;
  const Eigen::Index d = weight.cols() / window;
  const int half = (window - 1) / 2;
  Matrix<T> d_emb = Matrix<T>::Zero(c.len, d);
  for (int j = 0; j < c.len; ++j)
    for (int o = 0; o < window; ++o) {
      const int src = j + o - half;
      if (src >= 0 && src < c.len) d_emb.row(src) += d_x.block(j, o * d, 1, d);
    }
  return d_emb;
}

/// Full-length convolution: l x n output, rows at or past `mask_len` zeroed.
template <class T>
Matrix<T> convolve(const Matrix<T>& embedded, int mask_len, const Matrix<T>& weight, const Matrix<T>& bias,
                   int window) {
  CARP_ASSERT(embedded.rows() >= 1, "document length must be at least 1");
  Matrix<T> out = Matrix<T>::Zero(embedded.rows(), weight.rows());
  if (mask_len > 0) out.topRows(mask_len) = conv_forward(embedded, mask_len, weight, bias, window).out;
  return out;
}

/// Scatter embedding-row gradients into the table gradient; padding is frozen.
template <class T>
void embedding_backward(std::span<const TokenId> tokens, const Matrix<T>& d_emb, Matrix<T>& d_table) {
  for (Eigen::Index j = 0; j < d_emb.rows(); ++j) {
    const TokenId w = tokens[static_cast<std::size_t>(j)];
    if (w != kPadToken) d_table.row(w) += d_emb.row(j);
  }
}

}  // namespace carp
