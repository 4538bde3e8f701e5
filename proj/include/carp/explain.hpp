#pragma once
// Explanation reports: ranked logic units per sentiment capsule, top-K
// attention phrases with their source sentences, max-normalized sentiment
// ratings; and the per-rank c_pos/c_neg ratio table.

#include "carp/checkpoint.hpp"
#include "carp/dataset.hpp"
#include "carp/model.hpp"
#include "carp/text.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace carp {

struct Phrase {
  int begin = 0;   // first document position
  int end = 0;     // one past the last position
  double weight = 0;
  std::string words;     // preprocessed vocabulary words
  std::string sentence;  // source sentence of the window's centre token
  std::int32_t record = -1;
};

/// Ranks every full window of `window` positions by the sum of attention
/// weights inside it: weight descending, then position ascending. A
/// document shorter than the window yields one whole-document phrase.
inline std::vector<Phrase> top_phrases(std::span<const double> attention, int len, int window, std::size_t k) {
  CARP_ASSERT(k >= 1, "K must be at least 1");
  CARP_ASSERT(len >= 0 && static_cast<std::size_t>(len) <= attention.size(), "length exceeds attention size");
  std::vector<Phrase> all;
  if (len < window) {
    Phrase p;
    p.begin = 0;
    p.end = len;
    for (int j = 0; j < len; ++j) p.weight += attention[j];
    all.push_back(p);
    return all;
  }
  for (int b = 0; b + window <= len; ++b) {
    Phrase p;
    p.begin = b;
    p.end = b + window;
    for (int j = b; j < b + window; ++j) p.weight += attention[j];
    all.push_back(p);
  }
  std::stable_sort(all.begin(), all.end(), [](const Phrase& a, const Phrase& b) {
    return a.weight != b.weight ? a.weight > b.weight : a.begin < b.begin;
  });
  if (all.size() > k) all.resize(k);
  return all;
}

/// r / max|r|; all-zero input stays zero.
inline std::vector<double> max_normalize(const std::vector<double>& r) {
  double mx = 0;
  for (double v : r) mx = std::max(mx, std::fabs(v));
  std::vector<double> out(r.size(), 0.0);
  if (mx > 0)
    for (std::size_t i = 0; i < r.size(); ++i) out[i] = r[i] / mx;
  return out;
}

struct UnitExplanation {
  int viewpoint = 0, aspect = 0;  // x, y (0-based)
  double c_pos = 0, c_neg = 0;
  std::vector<Phrase> viewpoint_phrases, aspect_phrases;
};

struct ExplanationReport {
  std::string user_id, item_id;
  std::optional<double> true_rating;
  PredictionBreakdown breakdown;
  double r_pos_normalized = 0, r_neg_normalized = 0;
  std::vector<UnitExplanation> positive_units, negative_units;
};

namespace detail {

inline void attach_text(Phrase& p, const DocumentSet& set, std::size_t entity, const Dataset& ds) {
  std::ostringstream words;
  for (int j = p.begin; j < p.end; ++j) {
    if (j > p.begin) words << ' ';
    words << ds.vocab.word(set.doc(entity)[static_cast<std::size_t>(j)]);
  }
  p.words = words.str();
  if (p.end <= p.begin) return;
  const std::size_t centre = entity * set.cap + static_cast<std::size_t>((p.begin + p.end - 1) / 2);
  const std::int32_t rec = set.src_record[centre], tok = set.src_token[centre];
  p.record = rec;
  if (rec < 0 || static_cast<std::size_t>(rec) >= ds.corpus.records.size()) return;
  const auto& r = ds.corpus.records[static_cast<std::size_t>(rec)];
  if (tok < 0 || static_cast<std::size_t>(tok) >= r.offsets.size()) return;
  const auto sp = text::sentence_at(r.text, r.offsets[static_cast<std::size_t>(tok)]);
  p.sentence = r.text.substr(sp.begin, sp.end - sp.begin);
}

inline std::vector<Phrase> slot_phrases(const std::optional<DocumentEncoding<float>>& enc, const DocumentSet& set,
                                        std::int64_t entity, int slot, int window, std::size_t k, const Dataset& ds) {
  if (!enc) return {};
  const Vector<float> a = enc->attention(slot);
  std::vector<double> w(static_cast<std::size_t>(a.size()));
  for (Eigen::Index j = 0; j < a.size(); ++j) w[static_cast<std::size_t>(j)] = a(j);
  auto phrases = top_phrases(w, enc->len, window, k);
  for (auto& p : phrases) attach_text(p, set, static_cast<std::size_t>(entity), ds);
  return phrases;
}

}  // namespace detail

struct ExplainRequest {
  std::string user_id, item_id;
};

/// Explains each requested pair. Max-normalization of r_pos / r_neg runs
/// over `normalization_pool` (typically the test set) plus the requested
/// pairs; pass an empty pool to normalize over the requested pairs only.
inline std::vector<ExplanationReport> explain(const Checkpoint& ck, const Dataset& ds,
                                              const std::vector<ExplainRequest>& requests, std::size_t top_k,
                                              std::size_t top_units,
                                              std::span<const Interaction> normalization_pool = {}) {
  if (ck.vocab_hash != ds.vocab.hash()) throw Error("checkpoint vocabulary does not match the dataset");
  std::unordered_map<std::string, std::int64_t> uidx, iidx;
  for (std::size_t i = 0; i < ds.split.user_ids.size(); ++i) uidx[ds.split.user_ids[i]] = static_cast<std::int64_t>(i);
  for (std::size_t i = 0; i < ds.split.item_ids.size(); ++i) iidx[ds.split.item_ids[i]] = static_cast<std::int64_t>(i);

  std::map<std::pair<std::int64_t, std::int64_t>, double> known_ratings;
  for (const auto* part : {&ds.split.train, &ds.split.validation, &ds.split.test})
    for (const auto& x : *part) known_ratings[{x.user, x.item}] = x.rating;

  const auto& cfg = ck.model;
  const int m = cfg.slots, units = cfg.units();
  std::vector<ExplanationReport> reports;
  std::vector<double> r_pos, r_neg;
  for (const auto& req : requests) {
    const std::int64_t u = uidx.count(req.user_id) ? uidx[req.user_id] : -1;
    const std::int64_t i = iidx.count(req.item_id) ? iidx[req.item_id] : -1;
    const auto tr = predict_pair(ck.params, cfg, ds.bank, u, i);
    ExplanationReport rep;
    rep.user_id = req.user_id;
    rep.item_id = req.item_id;
    rep.breakdown = tr.breakdown;
    if (auto it = known_ratings.find({u, i}); it != known_ratings.end()) rep.true_rating = it->second;
    for (int s = 0; s < 2; ++s) {
      std::vector<int> order(static_cast<std::size_t>(units));
      std::iota(order.begin(), order.end(), 0);
      const auto& c = tr.breakdown.coupling;
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return c[s][a] > c[s][b]; });
      auto& out = s == 0 ? rep.positive_units : rep.negative_units;
      for (std::size_t r = 0; r < std::min<std::size_t>(top_units, order.size()); ++r) {
        UnitExplanation ue;
        ue.viewpoint = order[r] / m;
        ue.aspect = order[r] % m;
        ue.c_pos = c[0][order[r]];
        ue.c_neg = c[1][order[r]];
        ue.viewpoint_phrases = detail::slot_phrases(tr.user, ds.bank.users, u, ue.viewpoint, cfg.window, top_k, ds);
        ue.aspect_phrases = detail::slot_phrases(tr.item, ds.bank.items, i, ue.aspect, cfg.window, top_k, ds);
        out.push_back(std::move(ue));
      }
    }
    r_pos.push_back(tr.breakdown.r_pos);
    r_neg.push_back(tr.breakdown.r_neg);
    reports.push_back(std::move(rep));
  }
  const std::size_t n_req = reports.size();
  for (const auto& x : normalization_pool) {
    const auto tr = predict_pair(ck.params, cfg, ds.bank, x.user, x.item);
    r_pos.push_back(tr.breakdown.r_pos);
    r_neg.push_back(tr.breakdown.r_neg);
  }
  const auto np = max_normalize(r_pos), nn = max_normalize(r_neg);
  for (std::size_t k = 0; k < n_req; ++k) {
    reports[k].r_pos_normalized = np[k];
    reports[k].r_neg_normalized = nn[k];
  }
  return reports;
}

inline nlohmann::json to_json(const Phrase& p) {
  return {{"begin", p.begin}, {"end", p.end},       {"weight", p.weight},
          {"words", p.words}, {"sentence", p.sentence}, {"record", p.record}};
}

inline nlohmann::json to_json(const ExplanationReport& r) {
  nlohmann::json j;
  j["user"] = r.user_id;
  j["item"] = r.item_id;
  j["rating"] = r.true_rating ? nlohmann::json(*r.true_rating) : nlohmann::json(nullptr);
  j["predicted"] = r.breakdown.rating;
  j["breakdown"] = to_json(r.breakdown);
  j["r_pos_normalized"] = r.r_pos_normalized;
  j["r_neg_normalized"] = r.r_neg_normalized;
  for (auto [key, units] : {std::pair{"positive_units", &r.positive_units}, std::pair{"negative_units", &r.negative_units}}) {
    j[key] = nlohmann::json::array();
    for (const auto& u : *units) {
      nlohmann::json ju{{"x", u.viewpoint + 1}, {"y", u.aspect + 1}, {"c_pos", u.c_pos}, {"c_neg", u.c_neg}};
      ju["viewpoint_phrases"] = nlohmann::json::array();
      ju["aspect_phrases"] = nlohmann::json::array();
      for (const auto& p : u.viewpoint_phrases) ju["viewpoint_phrases"].push_back(to_json(p));
      for (const auto& p : u.aspect_phrases) ju["aspect_phrases"].push_back(to_json(p));
      j[key].push_back(ju);
    }
  }
  return j;
}

namespace detail {

// Up to `n` distinct sentences from the highest-weighted phrases.
inline std::vector<std::string> top_sentences(const std::vector<Phrase>& ps, std::size_t n) {
  std::vector<std::string> out;
  for (const auto& p : ps) {
    const std::string& s = p.sentence.empty() ? p.words : p.sentence;
    if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
    if (out.size() >= n) break;
  }
  return out;
}

inline std::string fmt3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

}  // namespace detail

/// Plain-text rendering: a header line with the rating breakdown, then one
/// block per listed logic unit with viewpoint/aspect sentences and both
/// coupling coefficients.
inline std::string render_text(const ExplanationReport& r) {
  std::ostringstream out;
  const auto& b = r.breakdown;
  out << "user " << r.user_id << " - item " << r.item_id << ": ";
  out << "r = " << (r.true_rating ? detail::fmt3(*r.true_rating) : std::string("?"));
  out << ", r_hat = " << detail::fmt3(b.rating) << ", |o_pos| = " << detail::fmt3(b.len_pos)
      << ", |o_neg| = " << detail::fmt3(b.len_neg) << ", r_pos = " << detail::fmt3(r.r_pos_normalized)
      << ", r_neg = " << detail::fmt3(r.r_neg_normalized);
  if (b.cold) out << "  [cold]";
  out << "\n";
  out << std::string(78, '-') << "\n";
  for (auto [label, units] : {std::pair{"pos", &r.positive_units}, std::pair{"neg", &r.negative_units}}) {
    for (const auto& u : *units) {
      out << "g_" << u.viewpoint + 1 << "," << u.aspect + 1 << " (" << label << " capsule)"
          << "   c_pos = " << detail::fmt3(u.c_pos) << "   c_neg = " << detail::fmt3(u.c_neg) << "\n";
      for (const auto& s : detail::top_sentences(u.viewpoint_phrases, 2)) out << "    viewpoint: " << s << "\n";
      for (const auto& s : detail::top_sentences(u.aspect_phrases, 2)) out << "    aspect:    " << s << "\n";
      out << std::string(78, '-') << "\n";
    }
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Ratio report

inline constexpr double kRatioSentinel = 1e6;

/// Mean c_pos/c_neg per rank of the positive capsule. Each element of
/// `couplings` is a 2 x U coefficient table (row 0 pos, row 1 neg).
inline std::vector<double> ratio_table(const std::vector<std::vector<std::vector<double>>>& couplings) {
  if (couplings.empty()) return {};
  const std::size_t units = couplings.front()[0].size();
  std::vector<double> sum(units, 0.0);
  for (const auto& c : couplings) {
    std::vector<std::size_t> order(units);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return c[0][a] > c[0][b]; });
    for (std::size_t r = 0; r < units; ++r) {
      const double pos = c[0][order[r]], neg = c[1][order[r]];
      sum[r] += neg > 0 ? std::min(pos / neg, kRatioSentinel) : kRatioSentinel;
    }
  }
  for (auto& s : sum) s /= static_cast<double>(couplings.size());
  return sum;
}

inline std::vector<double> ratio_report(const Checkpoint& ck, const Dataset& ds) {
  if (ck.vocab_hash != ds.vocab.hash()) throw Error("checkpoint vocabulary does not match the dataset");
  std::vector<std::vector<std::vector<double>>> cs;
  cs.reserve(ds.split.test.size());
  for (const auto& x : ds.split.test) cs.push_back(predict_pair(ck.params, ck.model, ds.bank, x.user, x.item).breakdown.coupling);
  return ratio_table(cs);
}

}  // namespace carp
