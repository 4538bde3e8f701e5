#pragma once
// Model parameters and the end-to-end forward/backward pass:
// documents -> contextual features -> viewpoints/aspects -> logic units ->
// sentiment capsules -> rating heads -> overall rating.

#include "carp/capsules.hpp"
#include "carp/common.hpp"
#include "carp/corpus.hpp"
#include "carp/encoder.hpp"
#include "carp/extraction.hpp"
#include "carp/losses.hpp"
#include "carp/prediction.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace carp {

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  int embed_dim = 300;    // d
  int filters = 50;       // n
  int window = 3;         // c
  int latent_dim = 25;    // k
  int slots = 5;          // M
  int routing_iters = 3;  // tau
  RoutingKind routing = RoutingKind::kBiAgreement;
  double keep_prob = 0.9;
  double max_rating = 5.0;  // C

  int units() const { return slots * slots; }

  void validate() const {
    if (embed_dim < 1 || filters < 1 || latent_dim < 1 || slots < 1 || routing_iters < 1)
      throw Error("model dimensions must be positive");
    if (window < 1 || window % 2 == 0) throw Error("window size must be odd");
    if (keep_prob <= 0 || keep_prob > 1) throw Error("keep probability must lie in (0, 1]");
    if (vocab_size < 2) throw Error("vocabulary must include <pad> and <unk>");
  }
};

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"num_users", c.num_users},    {"num_items", c.num_items},
          {"d", c.embed_dim},           {"n", c.filters},              {"c", c.window},
          {"k", c.latent_dim},          {"M", c.slots},                {"tau", c.routing_iters},
          {"routing", to_string(c.routing)}, {"keep_prob", c.keep_prob}, {"C", c.max_rating}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.num_users = j.at("num_users").get<std::size_t>();
  c.num_items = j.at("num_items").get<std::size_t>();
  c.embed_dim = j.at("d").get<int>();
  c.filters = j.at("n").get<int>();
  c.window = j.at("c").get<int>();
  c.latent_dim = j.at("k").get<int>();
  c.slots = j.at("M").get<int>();
  c.routing_iters = j.at("tau").get<int>();
  c.routing = parse_routing(j.at("routing").get<std::string>());
  c.keep_prob = j.at("keep_prob").get<double>();
  c.max_rating = j.at("C").get<double>();
  return c;
}

template <class T>
struct SideParams {
  Matrix<T> conv_w, conv_b;
  Matrix<T> gate_w1, gate_w2, gate_b, query, proj;

  SideGates<T> gates() const { return {gate_w1, gate_w2, gate_b, query, proj}; }
  SideGateGrads<T> gate_grads() { return {gate_w1, gate_w2, gate_b, query, proj}; }
};

template <class T>
struct ModelParams {
  Matrix<T> embedding;  // V x d, row 0 frozen at zero
  SideParams<T> user, item;
  Matrix<T> capsule_w;  // (2*M*M*k) x 2k
  Matrix<T> head_h1, head_h2;  // 2k x k, rows [s*k, (s+1)*k)
  Matrix<T> head_b1, head_b2, head_w;  // 2 x k
  Matrix<T> head_b3;    // 2 x 1
  Matrix<T> user_bias;  // U x 1
  Matrix<T> item_bias;  // I x 1

  /// Calls f(name, matrix) for every parameter array in a fixed order.
  template <class F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <class F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

  static ModelParams zeros(const ModelConfig& cfg) {
    ModelParams p;
    const int d = cfg.embed_dim, n = cfg.filters, c = cfg.window, k = cfg.latent_dim, m = cfg.slots;
    p.embedding = Matrix<T>::Zero(static_cast<Eigen::Index>(cfg.vocab_size), d);
    for (auto* side : {&p.user, &p.item}) {
      side->conv_w = Matrix<T>::Zero(n, c * d);
      side->conv_b = Matrix<T>::Zero(1, n);
      side->gate_w1 = Matrix<T>::Zero(m * n, n);
      side->gate_w2 = Matrix<T>::Zero(m * n, n);
      side->gate_b = Matrix<T>::Zero(m, n);
      side->query = Matrix<T>::Zero(m, n);
      side->proj = Matrix<T>::Zero(k, n);
    }
    p.capsule_w = Matrix<T>::Zero(2 * m * m * k, 2 * k);
    p.head_h1 = Matrix<T>::Zero(2 * k, k);
    p.head_h2 = Matrix<T>::Zero(2 * k, k);
    p.head_b1 = Matrix<T>::Zero(2, k);
    p.head_b2 = Matrix<T>::Zero(2, k);
    p.head_w = Matrix<T>::Zero(2, k);
    p.head_b3 = Matrix<T>::Zero(2, 1);
    p.user_bias = Matrix<T>::Zero(static_cast<Eigen::Index>(cfg.num_users), 1);
    p.item_bias = Matrix<T>::Zero(static_cast<Eigen::Index>(cfg.num_items), 1);
    return p;
  }

  /// Embeddings uniform in [-0.1, 0.1]; weight matrices Glorot-uniform;
  /// biases zero.
  static ModelParams initialize(const ModelConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    ModelParams p = zeros(cfg);
    auto fill = [&](auto&& block, double bound) {
      std::uniform_real_distribution<double> u(-bound, bound);
      for (Eigen::Index r = 0; r < block.rows(); ++r)
        for (Eigen::Index c = 0; c < block.cols(); ++c) block(r, c) = static_cast<T>(u(rng));
    };
    auto glorot = [](double fan_in, double fan_out) { return std::sqrt(6.0 / (fan_in + fan_out)); };
    const int d = cfg.embed_dim, n = cfg.filters, c = cfg.window, k = cfg.latent_dim, m = cfg.slots;
    fill(p.embedding, 0.1);
    p.embedding.row(kPadToken).setZero();
    for (auto* side : {&p.user, &p.item}) {
      fill(side->conv_w, glorot(c * d, n));
      fill(side->gate_w1, glorot(n, n));
      fill(side->gate_w2, glorot(n, n));
      fill(side->query, 0.1);
      fill(side->proj, glorot(n, k));
    }
    fill(p.capsule_w, glorot(2 * k, k));
    fill(p.head_h1, glorot(k, k));
    fill(p.head_h2, glorot(k, k));
    fill(p.head_w, glorot(k, 1));
    (void)m;
    return p;
  }

  template <class U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    auto src = *this;
    std::vector<const Matrix<T>*> from;
    src.visit([&](const std::string&, const Matrix<T>& m) { from.push_back(&m); });
    std::size_t i = 0;
    // Build `out` with matching shapes by visiting in the same order.
    out.visit_assign([&](const std::string&, Matrix<U>& m) { m = from[i++]->template cast<U>(); });
    return out;
  }

  template <class F>
  void visit_assign(F&& f) {
    visit_impl(*this, f);
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    visit([&](const std::string&, const Matrix<T>& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
  }

  void set_zero() {
    visit([](const std::string&, Matrix<T>& m) { m.setZero(); });
  }

 private:
  template <class Self, class F>
  static void visit_impl(Self& s, F& f) {
    f(std::string("embedding"), s.embedding);
    for (auto [name, side] : {std::pair{"user", &s.user}, std::pair{"item", &s.item}}) {
      const std::string pre = std::string(name) + ".";
      f(pre + "conv_w", side->conv_w);
      f(pre + "conv_b", side->conv_b);
      f(pre + "gate_w1", side->gate_w1);
      f(pre + "gate_w2", side->gate_w2);
      f(pre + "gate_b", side->gate_b);
      f(pre + "query", side->query);
      f(pre + "proj", side->proj);
    }
    f(std::string("capsule_w"), s.capsule_w);
    f(std::string("head_h1"), s.head_h1);
    f(std::string("head_b1"), s.head_b1);
    f(std::string("head_h2"), s.head_h2);
    f(std::string("head_b2"), s.head_b2);
    f(std::string("head_w"), s.head_w);
    f(std::string("head_b3"), s.head_b3);
    f(std::string("user_bias"), s.user_bias);
    f(std::string("item_bias"), s.item_bias);
  }
};

template <class T>
HeadView<T> head_view(const ModelParams<T>& p, int s, int k) {
  return {p.head_h1.middleRows(s * k, k), p.head_b1.row(s).transpose(), p.head_h2.middleRows(s * k, k),
          p.head_b2.row(s).transpose(), p.head_w.row(s).transpose(), p.head_b3(s, 0)};
}

// ---------------------------------------------------------------------------
// Forward pass

/// Cached activations for one user or item document.
template <class T>
struct DocumentEncoding {
  std::span<const TokenId> tokens;
  int len = 0;
  Matrix<T> embedded;  // len x d
  ConvCache<T> conv;
  ExtractionCache<T> extraction;

  const Matrix<T>& views() const { return extraction.views; }
  /// Attention weights of slot x over the first `len` positions.
  Vector<T> attention(int x) const { return extraction.slots[static_cast<std::size_t>(x)].attn.weights; }
};

template <class T>
DocumentEncoding<T> encode_document(const ModelParams<T>& p, const SideParams<T>& side, const ModelConfig& cfg,
                                    std::span<const TokenId> tokens, int len, std::mt19937_64* dropout_rng) {
  CARP_ASSERT(len >= 1 && static_cast<std::size_t>(len) <= tokens.size(), "document must be non-empty");
  DocumentEncoding<T> e;
  e.tokens = tokens;
  e.len = len;
  e.embedded = embed(p.embedding, tokens.first(static_cast<std::size_t>(len)));
  e.conv = conv_forward(e.embedded, len, side.conv_w, side.conv_b, cfg.window, static_cast<T>(cfg.keep_prob),
                        dropout_rng);
  e.extraction = extract_all(e.conv.out, side.gates());
  return e;
}

template <class T>
void encode_document_backward(const DocumentEncoding<T>& e, const SideParams<T>& side, const ModelConfig& cfg,
                              const Matrix<T>& d_views, SideParams<T>& side_grad, Matrix<T>& d_embedding) {
  const Matrix<T> d_feat = extract_backward(e.extraction, e.conv.out, d_views, side.gates(), side_grad.gate_grads());
  const Matrix<T> d_emb = conv_backward(e.conv, d_feat, side.conv_w, cfg.window, side_grad.conv_w, side_grad.conv_b);
  embedding_backward(e.tokens, d_emb, d_embedding);
}

/// Cached activations for one user-item pair above the document encoders.
template <class T>
struct PairForward {
  Matrix<T> units;  // U x 2k
  Matrix<T> t;      // 2U x k
  RoutingState<T> routing;
  HighwayCache<T> highway[2];
  Vector<T> drop[2];  // inverted-dropout multipliers on h (empty when inactive)
  T r[2] = {0, 0};
  T len[2] = {0, 0};
  T fused = 0;
  T user_bias = 0, item_bias = 0;
  T prediction = 0;
};

template <class T>
PairForward<T> forward_pair(const ModelParams<T>& p, const ModelConfig& cfg, const Matrix<T>& views,
                            const Matrix<T>& aspects, T user_bias, T item_bias, std::mt19937_64* dropout_rng) {
  const int k = cfg.latent_dim;
  PairForward<T> f;
  f.units = compose_all(views, aspects);
  f.t = transform_units(f.units, p.capsule_w);
  f.routing = route(f.t, cfg.routing_iters, cfg.routing);
  const T keep = static_cast<T>(cfg.keep_prob);
  for (int s = 0; s < 2; ++s) {
    const Vector<T> o = f.routing.o().row(s).transpose();
    const auto head = head_view(p, s, k);
    f.highway[s] = highway_forward(o, head);
    Vector<T> h = f.highway[s].h;
    if (dropout_rng != nullptr && keep < T(1)) {
      std::bernoulli_distribution b(static_cast<double>(keep));
      f.drop[s].resize(k);
      for (int i = 0; i < k; ++i) f.drop[s](i) = b(*dropout_rng) ? T(1) / keep : T(0);
      h = h.cwiseProduct(f.drop[s]);
    }
    f.r[s] = sentiment_rating(h, head.w, head.b3);
    f.len[s] = o.norm();
  }
  f.fused = f.r[0] * f.len[0] - f.r[1] * f.len[1];
  f.user_bias = user_bias;
  f.item_bias = item_bias;
  f.prediction = rating_squash(f.fused, static_cast<T>(cfg.max_rating)) + user_bias + item_bias;
  return f;
}

/// Backward from d(prediction) and d(capsule lengths) to parameter gradients
/// and d(views), d(aspects).
template <class T>
void forward_pair_backward(const ModelParams<T>& p, const ModelConfig& cfg, const Matrix<T>& views,
                           const Matrix<T>& aspects, const PairForward<T>& f, T d_pred, const T d_len_extra[2],
                           ModelParams<T>& g, Matrix<T>& d_views, Matrix<T>& d_aspects) {
  const int k = cfg.latent_dim;
  const T sg = sigmoid(f.fused);
  const T d_fused = d_pred * static_cast<T>(cfg.max_rating - 1.0) * sg * (T(1) - sg);
  const T d_r[2] = {d_fused * f.len[0], -d_fused * f.len[1]};
  const T d_len[2] = {d_fused * f.r[0] + d_len_extra[0], -d_fused * f.r[1] + d_len_extra[1]};

  Matrix<T> d_o(2, k);
  for (int s = 0; s < 2; ++s) {
    const Vector<T> o = f.routing.o().row(s).transpose();
    const auto head = head_view(p, s, k);
    const auto& hw = f.highway[s];
    const Vector<T> h_used = f.drop[s].size() ? Vector<T>(hw.h.cwiseProduct(f.drop[s])) : hw.h;
    g.head_w.row(s) += d_r[s] * h_used.transpose();
    g.head_b3(s, 0) += d_r[s];
    Vector<T> d_h = d_r[s] * head.w;
    if (f.drop[s].size()) d_h = d_h.cwiseProduct(f.drop[s]);

    const Vector<T> d_eta = d_h.cwiseProduct(o - hw.carry);
    Vector<T> d_out = d_h.cwiseProduct(hw.eta);
    const Vector<T> d_carry = d_h.cwiseProduct((T(1) - hw.eta.array()).matrix());
    const Vector<T> d_a1 = d_eta.cwiseProduct(hw.eta.cwiseProduct((T(1) - hw.eta.array()).matrix()));
    const Vector<T> d_a2 = d_carry.cwiseProduct((T(1) - hw.carry.array().square()).matrix());
    g.head_h1.middleRows(s * k, k).noalias() += d_a1 * o.transpose();
    g.head_b1.row(s) += d_a1.transpose();
    g.head_h2.middleRows(s * k, k).noalias() += d_a2 * o.transpose();
    g.head_b2.row(s) += d_a2.transpose();
    d_out.noalias() += head.h1.transpose() * d_a1;
    d_out.noalias() += head.h2.transpose() * d_a2;
    if (f.len[s] > T(0)) d_out += (d_len[s] / f.len[s]) * o;
    d_o.row(s) = d_out.transpose();
  }

  const Matrix<T> d_t = route_backward(f.t, f.routing, d_o);
  const Matrix<T> d_units = transform_units_backward(f.units, p.capsule_w, d_t, g.capsule_w);
  compose_all_backward(views, aspects, d_units, d_views, d_aspects);
}

// ---------------------------------------------------------------------------
// Batches

template <class T>
struct BatchResult {
  double loss = 0, l_sqr = 0, l_stm = 0;
  std::vector<T> predictions;
  std::vector<CapsuleLengths> lengths;
};

/// Forward (and, when `grads` is non-null, backward) over one mini-batch.
/// Each distinct user/item document is encoded once per batch. Dropout is
/// active iff `dropout_rng` is non-null.
template <class T>
BatchResult<T> run_batch(const ModelParams<T>& p, const ModelConfig& cfg, const DocumentBank& bank,
                         std::span<const Interaction> batch, const LossConfig& loss, ModelParams<T>* grads,
                         std::mt19937_64* dropout_rng) {
  if (batch.empty()) throw Error("empty batch");
  std::unordered_map<std::int32_t, std::size_t> user_slot, item_slot;
  std::vector<DocumentEncoding<T>> users, items;
  auto encode = [&](bool is_user, std::int32_t id) -> std::size_t {
    auto& slots = is_user ? user_slot : item_slot;
    auto& encs = is_user ? users : items;
    auto it = slots.find(id);
    if (it != slots.end()) return it->second;
    const auto& set = is_user ? bank.users : bank.items;
    encs.push_back(encode_document(p, is_user ? p.user : p.item, cfg, set.doc(static_cast<std::size_t>(id)),
                                   set.length(static_cast<std::size_t>(id)), dropout_rng));
    slots.emplace(id, encs.size() - 1);
    return encs.size() - 1;
  };

  const std::size_t b = batch.size();
  const T inv_b = T(1) / static_cast<T>(b);
  const T lambda = static_cast<T>(loss.lambda), eps = static_cast<T>(loss.epsilon);
  BatchResult<T> res;
  std::vector<PairForward<T>> pairs;
  std::vector<std::pair<std::size_t, std::size_t>> slots;
  pairs.reserve(b);
  for (const auto& x : batch) {
    const std::size_t us = encode(true, x.user), is = encode(false, x.item);
    slots.emplace_back(us, is);
    pairs.push_back(forward_pair(p, cfg, users[us].views(), items[is].views(), p.user_bias(x.user, 0),
                                 p.item_bias(x.item, 0), dropout_rng));
    const auto& f = pairs.back();
    const T err = f.prediction - static_cast<T>(x.rating);
    res.l_sqr += static_cast<double>(err * err);
    res.l_stm += static_cast<double>(sentiment_margin(f.len[0], f.len[1], x.label, eps, loss.mutual_exclusion));
    res.predictions.push_back(f.prediction);
    res.lengths.push_back({static_cast<double>(f.len[0]), static_cast<double>(f.len[1]), x.label});
  }
  res.l_sqr /= static_cast<double>(b);
  res.l_stm /= static_cast<double>(b);
  res.loss = loss.lambda * res.l_sqr + (1.0 - loss.lambda) * res.l_stm;
  if (grads == nullptr) return res;

  std::vector<Matrix<T>> d_views(users.size()), d_aspects(items.size());
  for (std::size_t i = 0; i < users.size(); ++i) d_views[i] = Matrix<T>::Zero(cfg.slots, cfg.latent_dim);
  for (std::size_t i = 0; i < items.size(); ++i) d_aspects[i] = Matrix<T>::Zero(cfg.slots, cfg.latent_dim);

  for (std::size_t i = 0; i < b; ++i) {
    const auto& x = batch[i];
    const auto& f = pairs[i];
    const T d_pred = T(2) * lambda * (f.prediction - static_cast<T>(x.rating)) * inv_b;
    grads->user_bias(x.user, 0) += d_pred;
    grads->item_bias(x.item, 0) += d_pred;
    // Margin terms of the sentiment loss act directly on capsule lengths.
    T d_len[2] = {0, 0};
    const int own = x.label == Sentiment::kPos ? 0 : 1, other = 1 - own;
    const T w = (T(1) - lambda) * inv_b;
    if (eps - f.len[own] > T(0)) d_len[own] -= w;
    if (loss.mutual_exclusion && f.len[other] - T(1) + eps > T(0)) d_len[other] += w;
    const auto [us, is] = slots[i];
    forward_pair_backward(p, cfg, users[us].views(), items[is].views(), f, d_pred, d_len, *grads, d_views[us],
                          d_aspects[is]);
  }
  for (std::size_t i = 0; i < users.size(); ++i)
    encode_document_backward(users[i], p.user, cfg, d_views[i], grads->user, grads->embedding);
  for (std::size_t i = 0; i < items.size(); ++i)
    encode_document_backward(items[i], p.item, cfg, d_aspects[i], grads->item, grads->embedding);
  grads->embedding.row(kPadToken).setZero();
  return res;
}

// ---------------------------------------------------------------------------
// Inference

/// Full forward state for one pair, kept for explanation reports.
template <class T>
struct PairTrace {
  std::optional<DocumentEncoding<T>> user, item;
  PairForward<T> forward;
  PredictionBreakdown breakdown;
};

/// Scores one pair without dropout. `user`/`item` outside the trained range
/// (or with empty documents) are cold: zero viewpoints/aspects, bias 0.
template <class T>
PairTrace<T> predict_pair(const ModelParams<T>& p, const ModelConfig& cfg, const DocumentBank& bank,
                          std::int64_t user, std::int64_t item) {
  PairTrace<T> tr;
  const bool user_known = user >= 0 && static_cast<std::size_t>(user) < bank.users.count() &&
                          static_cast<std::size_t>(user) < cfg.num_users && bank.users.length(user) > 0;
  const bool item_known = item >= 0 && static_cast<std::size_t>(item) < bank.items.count() &&
                          static_cast<std::size_t>(item) < cfg.num_items && bank.items.length(item) > 0;
  const Matrix<T> zero = Matrix<T>::Zero(cfg.slots, cfg.latent_dim);
  if (user_known)
    tr.user = encode_document(p, p.user, cfg, bank.users.doc(static_cast<std::size_t>(user)),
                              bank.users.length(static_cast<std::size_t>(user)), nullptr);
  if (item_known)
    tr.item = encode_document(p, p.item, cfg, bank.items.doc(static_cast<std::size_t>(item)),
                              bank.items.length(static_cast<std::size_t>(item)), nullptr);
  const T ub = user_known ? p.user_bias(user, 0) : T(0);
  const T ib = item_known ? p.item_bias(item, 0) : T(0);
  tr.forward = forward_pair(p, cfg, tr.user ? tr.user->views() : zero, tr.item ? tr.item->views() : zero, ub, ib,
                            nullptr);
  auto& bd = tr.breakdown;
  const auto& f = tr.forward;
  bd.r_pos = static_cast<double>(f.r[0]);
  bd.r_neg = static_cast<double>(f.r[1]);
  bd.len_pos = static_cast<double>(f.len[0]);
  bd.len_neg = static_cast<double>(f.len[1]);
  bd.user_bias = static_cast<double>(ub);
  bd.item_bias = static_cast<double>(ib);
  bd.max_rating = cfg.max_rating;
  bd.rating = static_cast<double>(f.prediction);
  bd.cold = !user_known || !item_known;
  const auto& c = f.routing.c();
  bd.coupling.assign(2, std::vector<double>(static_cast<std::size_t>(c.cols())));
  for (int s = 0; s < 2; ++s)
    for (Eigen::Index u = 0; u < c.cols(); ++u) bd.coupling[s][u] = static_cast<double>(c(s, u));
  return tr;
}

}  // namespace carp
