#pragma once
// Logic units, sentiment-specific transforms and the two routing procedures
// feeding the positive and negative sentiment capsules.
//
// Layout conventions: with U = M*M logic units, unit u = x*M + y pairs
// viewpoint x with aspect y. Per-sentiment quantities are 2 x U matrices
// (row 0 = pos, row 1 = neg); transformed features are a (2U) x k matrix
// whose row s*U + u holds t_{s,x,y}.

#include "carp/common.hpp"

#include <string_view>
#include <vector>

namespace carp {

enum class RoutingKind { kBiAgreement, kAgreement };

inline const char* to_string(RoutingKind k) { return k == RoutingKind::kBiAgreement ? "rbia" : "ra"; }
inline RoutingKind parse_routing(std::string_view s) {
  if (s == "rbia") return RoutingKind::kBiAgreement;
  if (s == "ra") return RoutingKind::kAgreement;
  throw Error("unknown routing '" + std::string(s) + "' (expected rbia or ra)");
}

/// g = (v - a) ⊕ (v ⊙ a)
template <class T>
Vector<T> compose(const Vector<T>& v, const Vector<T>& a) {
  Vector<T> g(2 * v.size());
  g.head(v.size()) = v - a;
  g.tail(v.size()) = v.cwiseProduct(a);
  return g;
}

/// All M*M logic units, row x*M + y.
template <class T>
Matrix<T> compose_all(const Matrix<T>& views, const Matrix<T>& aspects) {
  const Eigen::Index m = views.rows(), k = views.cols();
  Matrix<T> g(m * m, 2 * k);
  for (Eigen::Index x = 0; x < m; ++x)
    for (Eigen::Index y = 0; y < m; ++y) {
      g.block(x * m + y, 0, 1, k) = views.row(x) - aspects.row(y);
      g.block(x * m + y, k, 1, k) = views.row(x).cwiseProduct(aspects.row(y));
    }
  return g;
}

/// d(views), d(aspects) from d(units).
template <class T>
void compose_all_backward(const Matrix<T>& views, const Matrix<T>& aspects, const Matrix<T>& d_units,
                          Matrix<T>& d_views, Matrix<T>& d_aspects) {
  const Eigen::Index m = views.rows(), k = views.cols();
  for (Eigen::Index x = 0; x < m; ++x)
    for (Eigen::Index y = 0; y < m; ++y) {
      const auto dd = d_units.block(x * m + y, 0, 1, k);
      const auto dp = d_units.block(x * m + y, k, 1, k);
      d_views.row(x) += dd + dp.cwiseProduct(aspects.row(y));
      d_aspects.row(y) += -dd + dp.cwiseProduct(views.row(x));
    }
}

/// t_{s,u} = W_{s,u} g_u for both sentiments. `weights` stacks the 2U
/// k x 2k matrices: block (s*U + u) occupies rows [(s*U+u)*k, +k).
template <class T>
Matrix<T> transform_units(const Matrix<T>& units, const Matrix<T>& weights) {
  const Eigen::Index u_count = units.rows(), k = units.cols() / 2;
  CARP_ASSERT(weights.rows() == 2 * u_count * k && weights.cols() == 2 * k, "capsule transform shape");
  Matrix<T> t(2 * u_count, k);
  for (Eigen::Index s = 0; s < 2; ++s)
    for (Eigen::Index u = 0; u < u_count; ++u)
      t.row(s * u_count + u) = (weights.middleRows((s * u_count + u) * k, k) * units.row(u).transpose()).transpose();
  return t;
}

template <class T>
Matrix<T> transform_units_backward(const Matrix<T>& units, const Matrix<T>& weights, const Matrix<T>& d_t,
                                   Matrix<T>& d_weights) {
  const Eigen::Index u_count = units.rows(), k = units.cols() / 2;
  Matrix<T> d_units = Matrix<T>::Zero(u_count, 2 * k);
  for (Eigen::Index s = 0; s < 2; ++s)
    for (Eigen::Index u = 0; u < u_count; ++u) {
      const Eigen::Index blk = (s * u_count + u) * k;
      d_weights.middleRows(blk, k).noalias() += d_t.row(s * u_count + u).transpose() * units.row(u);
      d_units.row(u).noalias() += d_t.row(s * u_count + u) * weights.middleRows(blk, k);
    }
  return d_units;
}

/// o = (|s|^2 / (1 + |s|^2)) s/|s|; zero maps to zero.
template <class T>
Vector<T> squash(const Vector<T>& s) {
  const T r2 = s.squaredNorm();
  if (r2 == T(0)) return Vector<T>::Zero(s.size());
  const T r = std::sqrt(r2);
  return s * (r / (T(1) + r2));
}

template <class T>
Vector<T> squash_backward(const Vector<T>& s, const Vector<T>& d_o) {
  const T r2 = s.squaredNorm();
  if (r2 == T(0)) return Vector<T>::Zero(s.size());
  const T r = std::sqrt(r2);
  const T scale = r / (T(1) + r2);
  const T radial = (T(1) - r2) / ((T(1) + r2) * (T(1) + r2) * r);
  return scale * d_o + (radial * s.dot(d_o)) * s;
}

/// Coupling coefficients for one routing iteration. For RBiA `inter` is the
/// softmax over the two capsules and `intra` the softmax over units inside a
/// capsule; for RA only `inter` is used and equals `c`.
template <class T>
struct Coupling {
  Matrix<T> inter;
  Matrix<T> intra;
  Matrix<T> c;
};

/// Bi-agreement coupling. The L1-normalized geometric mean of the two
/// softmaxes is evaluated in log space: c = softmax_u(½(log č + log ĉ)),
/// which never underflows.
template <class T>
Coupling<T> rbia_coupling(const Matrix<T>& b) {
  const Eigen::Index u_count = b.cols();
  Matrix<T> log_inter(2, u_count), log_intra(2, u_count);
  for (Eigen::Index u = 0; u < u_count; ++u) log_inter.col(u) = log_softmax(b.col(u));
  for (Eigen::Index s = 0; s < 2; ++s) log_intra.row(s) = log_softmax(b.row(s).transpose()).transpose();
  Coupling<T> out;
  out.inter = log_inter.array().exp();
  out.intra = log_intra.array().exp();
  const Matrix<T> z = T(0.5) * (log_inter + log_intra);
  out.c.resize(2, u_count);
  for (Eigen::Index s = 0; s < 2; ++s) out.c.row(s) = softmax(z.row(s).transpose()).transpose();
  return out;
}

/// Dynamic-routing coupling: softmax of each unit's agreements over the two
/// capsules.
template <class T>
Coupling<T> ra_coupling(const Matrix<T>& b) {
  Coupling<T> out;
  out.c.resize(2, b.cols());
  for (Eigen::Index u = 0; u < b.cols(); ++u) out.c.col(u) = softmax(b.col(u));
  out.inter = out.c;
  return out;
}

template <class T>
Matrix<T> coupling_backward(RoutingKind kind, const Coupling<T>& cp, const Matrix<T>& d_c) {
  const Eigen::Index u_count = d_c.cols();
  Matrix<T> d_b(2, u_count);
  if (kind == RoutingKind::kAgreement) {
    for (Eigen::Index u = 0; u < u_count; ++u) {
      const T dot = cp.c.col(u).dot(d_c.col(u));
      d_b.col(u) = cp.c.col(u).cwiseProduct((d_c.col(u).array() - dot).matrix());
    }
    return d_b;
  }
  Matrix<T> d_half(2, u_count);  // d log č = d log ĉ = ½ dz
  for (Eigen::Index s = 0; s < 2; ++s) {
    const T dot = cp.c.row(s).dot(d_c.row(s));
    d_half.row(s) = T(0.5) * cp.c.row(s).cwiseProduct((d_c.row(s).array() - dot).matrix());
  }
  for (Eigen::Index u = 0; u < u_count; ++u) {
    const T sum = d_half.col(u).sum();
    d_b.col(u) = d_half.col(u) - cp.inter.col(u) * sum;
  }
  for (Eigen::Index s = 0; s < 2; ++s) {
    const T sum = d_half.row(s).sum();
    d_b.row(s) += d_half.row(s) - cp.intra.row(s) * sum;
  }
  return d_b;
}

template <class T>
struct RoutingIteration {
  Matrix<T> b;  // agreements entering this iteration
  Coupling<T> coupling;
  Matrix<T> s;  // 2 x k capsule inputs
  Matrix<T> o;  // 2 x k squashed outputs
};

template <class T>
struct RoutingState {
  RoutingKind kind = RoutingKind::kBiAgreement;
  int tau = 0;
  std::vector<RoutingIteration<T>> iterations;
  Matrix<T> b;  // agreements after the final update

  const Matrix<T>& c() const { return iterations.back().coupling.c; }
  const Matrix<T>& s() const { return iterations.back().s; }
  const Matrix<T>& o() const { return iterations.back().o; }
};

/// Iterative routing over `t` ((2U) x k). Agreements start at zero on every
/// call; the outputs of the final iteration are the capsule outputs.
template <class T>
RoutingState<T> route(const Matrix<T>& t, int tau, RoutingKind kind) {
  CARP_ASSERT(tau >= 1, "routing needs at least one iteration");
  CARP_ASSERT(t.rows() % 2 == 0, "feature rows must cover both capsules");
  const Eigen::Index u_count = t.rows() / 2, k = t.cols();
  RoutingState<T> st;
  st.kind = kind;
  st.tau = tau;
  Matrix<T> b = Matrix<T>::Zero(2, u_count);
  for (int it = 0; it < tau; ++it) {
    RoutingIteration<T> ri;
    ri.b = b;
    ri.coupling = kind == RoutingKind::kBiAgreement ? rbia_coupling(b) : ra_coupling(b);
    ri.s.resize(2, k);
    ri.o.resize(2, k);
    for (Eigen::Index s = 0; s < 2; ++s) {
      const Vector<T> sv = (ri.coupling.c.row(s) * t.middleRows(s * u_count, u_count)).transpose();
      ri.s.row(s) = sv.transpose();
      ri.o.row(s) = squash(sv).transpose();
    }
    for (Eigen::Index s = 0; s < 2; ++s)
      b.row(s) += (t.middleRows(s * u_count, u_count) * ri.o.row(s).transpose()).transpose();
    st.iterations.push_back(std::move(ri));
  }
  st.b = b;
  return st;
}

template <class T>
RoutingState<T> route_rbia(const Matrix<T>& t, int tau) {
  return route(t, tau, RoutingKind::kBiAgreement);
}
template <class T>
RoutingState<T> route_ra(const Matrix<T>& t, int tau) {
  return route(t, tau, RoutingKind::kAgreement);
}

/// Backward through all unrolled iterations given d(final outputs) (2 x k).
template <class T>
Matrix<T> route_backward(const Matrix<T>& t, const RoutingState<T>& st, const Matrix<T>& d_out) {
  const Eigen::Index u_count = t.rows() / 2, k = t.cols();
  Matrix<T> d_t = Matrix<T>::Zero(t.rows(), k);
  Matrix<T> d_b_next = Matrix<T>::Zero(2, u_count);  // gradient w.r.t. b after iteration `it`
  for (int it = st.tau - 1; it >= 0; --it) {
    const auto& ri = st.iterations[static_cast<std::size_t>(it)];
    Matrix<T> d_c(2, u_count);
    for (Eigen::Index s = 0; s < 2; ++s) {
      const auto ts = t.middleRows(s * u_count, u_count);
      // b_next = b + t . o
      Vector<T> d_o = ts.transpose() * d_b_next.row(s).transpose();
      if (it == st.tau - 1) d_o += d_out.row(s).transpose();
      d_t.middleRows(s * u_count, u_count).noalias() += d_b_next.row(s).transpose() * ri.o.row(s);
      const Vector<T> d_s = squash_backward<T>(ri.s.row(s).transpose(), d_o);
      d_c.row(s) = (ts * d_s).transpose();
      d_t.middleRows(s * u_count, u_count).noalias() += ri.coupling.c.row(s).transpose() * d_s.transpose();
    }
    if (it > 0) d_b_next += coupling_backward(st.kind, ri.coupling, d_c);
  }
  return d_t;
}

}  // namespace carp
