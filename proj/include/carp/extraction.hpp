#pragma once
// Viewpoint (user side) and aspect (item side) extraction: slot-specific
// gating of the contextual features, a shared projection to k dimensions and
// self-attention pooling over document positions.

#include "carp/common.hpp"

#include <vector>

namespace carp {

/// Gating/projection parameters of one side. Slot x owns rows
/// [x*n, (x+1)*n) of gate_w1/gate_w2 and row x of gate_b/query.
template <class T>
struct SideGates {
  const Matrix<T>& gate_w1;  // (M*n) x n
  const Matrix<T>& gate_w2;  // (M*n) x n
  const Matrix<T>& gate_b;   // M x n
  const Matrix<T>& query;    // M x n
  const Matrix<T>& proj;     // k x n
  int slots() const { return static_cast<int>(query.rows()); }
  int n() const { return static_cast<int>(query.cols()); }
};

template <class T>
struct SideGateGrads {
  Matrix<T>& gate_w1;
  Matrix<T>& gate_w2;
  Matrix<T>& gate_b;
  Matrix<T>& query;
  Matrix<T>& proj;
};

/// s = c ⊙ σ(W1 c + W2 q + b)
template <class T>
Vector<T> gate(const Vector<T>& c, const Matrix<T>& w1, const Matrix<T>& w2, const Vector<T>& q, const Vector<T>& b) {
  const Vector<T> pre = w1 * c + w2 * q + b;
  return c.cwiseProduct(pre.unaryExpr([](T v) { return sigmoid(v); }));
}

template <class T>
Vector<T> project(const Vector<T>& s, const Matrix<T>& proj) {
  return proj * s;
}

template <class T>
struct Attention {
  Vector<T> pooled;   // v
  Vector<T> weights;  // attn over all rows of the input, zero past mask_len
  Vector<T> query;    // masked mean of the projected rows
};

/// Masked-mean query, softmax over unmasked positions of p_j . query, then
/// attention-weighted sum.
template <class T>
Attention<T> self_attend(const Matrix<T>& p, int mask_len) {
  CARP_ASSERT(mask_len >= 1, "self-attention over an empty document");
  CARP_ASSERT(mask_len <= p.rows(), "mask longer than document");
  Attention<T> a;
  const auto live = p.topRows(mask_len);
  a.query = live.colwise().mean().transpose();
  const Vector<T> scores = live * a.query;
  a.weights = Vector<T>::Zero(p.rows());
  a.weights.head(mask_len) = softmax(scores);
  a.pooled = live.transpose() * a.weights.head(mask_len);
  return a;
}

template <class T>
struct SlotCache {
  Matrix<T> gate;  // len x n sigmoid outputs
  Matrix<T> gated; // len x n
  Matrix<T> proj;  // len x k
  Attention<T> attn;
};

template <class T>
struct ExtractionCache {
  std::vector<SlotCache<T>> slots;
  Matrix<T> views;  // M x k
};

/// Runs gate -> project -> self_attend for every slot on the first rows of
/// `features` (len x n, all rows live).
template <class T>
ExtractionCache<T> extract_all(const Matrix<T>& features, const SideGates<T>& g) {
  const int m = g.slots(), n = g.n();
  const int len = static_cast<int>(features.rows());
  ExtractionCache<T> cache;
  cache.slots.resize(m);
  cache.views.resize(m, g.proj.rows());
  for (int x = 0; x < m; ++x) {
    auto& s = cache.slots[x];
    const auto w1 = g.gate_w1.middleRows(x * n, n);
    const auto w2 = g.gate_w2.middleRows(x * n, n);
    const Vector<T> offset = w2 * g.query.row(x).transpose() + g.gate_b.row(x).transpose();
    Matrix<T> pre = features * w1.transpose();
    pre.rowwise() += offset.transpose();
    s.gate = pre.unaryExpr([](T v) { return sigmoid(v); });
    s.gated = features.cwiseProduct(s.gate);
    s.proj = s.gated * g.proj.transpose();
    s.attn = self_attend(s.proj, len);
    cache.views.row(x) = s.attn.pooled.transpose();
  }
  return cache;
}

/// Backward through extract_all. Returns d(features).
template <class T>
Matrix<T> extract_backward(const ExtractionCache<T>& cache, const Matrix<T>& features, const Matrix<T>& d_views,
                           const SideGates<T>& g, SideGateGrads<T> grad) {
  const int m = g.slots(), n = g.n();
  const int len = static_cast<int>(features.rows());
  Matrix<T> d_features = Matrix<T>::Zero(len, n);
  for (int x = 0; x < m; ++x) {
    const auto& s = cache.slots[x];
    const Vector<T> dv = d_views.row(x).transpose();
    const Vector<T> attn = s.attn.weights.head(len);

    // v = P^T attn, attn = softmax(P q), q = mean(P)
    Matrix<T> d_proj = attn * dv.transpose();
    const Vector<T> d_attn = s.proj * dv;
    const Vector<T> d_scores = attn.cwiseProduct((d_attn.array() - attn.dot(d_attn)).matrix());
    d_proj.noalias() += d_scores * s.attn.query.transpose();
    const Vector<T> d_query = s.proj.transpose() * d_scores;
    d_proj.rowwise() += (d_query / T(len)).transpose();

    grad.proj.noalias() += d_proj.transpose() * s.gated;
    const Matrix<T> d_gated = d_proj * g.proj;
    d_features += d_gated.cwiseProduct(s.gate);
    const Matrix<T> d_pre =
        d_gated.cwiseProduct(features).cwiseProduct(s.gate.cwiseProduct((T(1) - s.gate.array()).matrix()));
    const auto w1 = g.gate_w1.middleRows(x * n, n);
    const auto w2 = g.gate_w2.middleRows(x * n, n);
    grad.gate_w1.middleRows(x * n, n).noalias() += d_pre.transpose() * features;
    d_features.noalias() += d_pre * w1;
    const Vector<T> d_offset = d_pre.colwise().sum().transpose();
    grad.gate_b.row(x) += d_offset.transpose();
    grad.gate_w2.middleRows(x * n, n).noalias() += d_offset * g.query.row(x);
    grad.query.row(x) += (w2.transpose() * d_offset).transpose();
  }
  return d_features;
}

}  // namespace carp
