#pragma once
// Review ingestion, ConvMF-style preprocessing, train/validation/test
// splitting and user/item document construction.

#include "carp/common.hpp"
#include "carp/text.hpp"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>
#include <zlib.h>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace carp {

struct ReviewRecord {
  std::string user_id;
  std::string item_id;
  double rating = 0.0;
  std::string text;
  std::optional<std::int64_t> timestamp;
  // Filled by preprocess(): vocabulary indices and the byte offset of each
  // token in `text`.
  std::vector<TokenId> tokens;
  std::vector<std::uint32_t> offsets;
};

struct ReviewCorpus {
  std::vector<ReviewRecord> records;
  std::size_t malformed = 0;
};

enum class InputFormat { kAmazonJsonl, kGenericCsv };

inline InputFormat parse_format(std::string_view name) {
  if (name == "amazon-jsonl") return InputFormat::kAmazonJsonl;
  if (name == "generic-csv") return InputFormat::kGenericCsv;
  throw Error("unknown input format '" + std::string(name) + "'");
}

struct LoadOptions {
  double max_rating = 5.0;  // C
  // Linear map applied to raw ratings before range validation
  // (e.g. Beer's [4,20] -> [1,5] is scale 0.25, offset 0).
  double rating_scale = 1.0;
  double rating_offset = 0.0;
  double max_malformed_fraction = 0.10;
  // Malformed lines tolerated regardless of the fraction (a tiny file with a
  // single truncated line still loads).
  std::size_t malformed_allowance = 1;
};

namespace detail {

// Reads a plain or gzip-compressed file in full.
inline std::string read_maybe_gzip(const std::filesystem::path& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (f == nullptr) throw Error("cannot open " + path.string());
  std::string out;
  char buf[1 << 16];
  for (;;) {
    const int n = gzread(f, buf, sizeof(buf));
    if (n < 0) {
      int errnum = 0;
      std::string msg = gzerror(f, &errnum);
      gzclose(f);
      throw Error("read error in " + path.string() + ": " + msg);
    }
    if (n == 0) break;
    out.append(buf, static_cast<std::size_t>(n));
  }
  gzclose(f);
  return out;
}

// RFC 4180 CSV: quoted fields may contain separators, doubled quotes and
// newlines. Returns rows; `ok` is false for a row with an unterminated quote.
struct CsvRow {
  std::vector<std::string> fields;
  bool ok = true;
};

inline std::vector<CsvRow> parse_csv(std::string_view s) {
  std::vector<CsvRow> rows;
  CsvRow row;
  std::string field;
  bool in_quotes = false, any = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char ch = s[i];
    any = true;
    if (in_quotes) {
      if (ch == '"') {
        if (i + 1 < s.size() && s[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(ch);
      }
    } else if (ch == '"') {
      in_quotes = true;
    } else if (ch == ',') {
      row.fields.push_back(std::move(field));
      field.clear();
    } else if (ch == '\n' || ch == '\r') {
      if (ch == '\r' && i + 1 < s.size() && s[i + 1] == '\n') ++i;
      row.fields.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row = {};
      any = false;
    } else {
      field.push_back(ch);
    }
  }
  if (any) {
    row.fields.push_back(std::move(field));
    row.ok = !in_quotes;
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::optional<double> parse_double(const std::string& s) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
  } catch (...) {
    return std::nullopt;
  }
}

inline bool rating_in_range(double r, const LoadOptions& opt) {
  return std::isfinite(r) && r >= 1.0 && r <= opt.max_rating;
}

}  // namespace detail

/// Loads reviews in file order. Malformed lines are counted and skipped;
/// more than `max_malformed_fraction` malformed lines is fatal.
inline ReviewCorpus load_reviews(const std::filesystem::path& path, InputFormat format,
                                 const LoadOptions& opt = {}) {
  const std::string content = detail::read_maybe_gzip(path);
  ReviewCorpus corpus;
  std::size_t seen = 0;

  if (format == InputFormat::kAmazonJsonl) {
    std::size_t pos = 0;
    while (pos < content.size()) {
      std::size_t nl = content.find('\n', pos);
      if (nl == std::string::npos) nl = content.size();
      std::string_view line(content.data() + pos, nl - pos);
      pos = nl + 1;
      if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
      ++seen;
      auto j = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
      if (j.is_discarded() || !j.is_object() || !j.contains("reviewerID") || !j.contains("asin") ||
          !j.contains("overall") || !j["overall"].is_number() || !j["reviewerID"].is_string() ||
          !j["asin"].is_string()) {
        ++corpus.malformed;
        continue;
      }
      ReviewRecord r;
      r.user_id = j["reviewerID"].get<std::string>();
      r.item_id = j["asin"].get<std::string>();
      r.rating = j["overall"].get<double>() * opt.rating_scale + opt.rating_offset;
      if (!detail::rating_in_range(r.rating, opt)) {
        ++corpus.malformed;
        continue;
      }
      if (auto it = j.find("reviewText"); it != j.end() && it->is_string()) r.text = it->get<std::string>();
      if (auto it = j.find("unixReviewTime"); it != j.end() && it->is_number_integer())
        r.timestamp = it->get<std::int64_t>();
      corpus.records.push_back(std::move(r));
    }
  } else {
    auto rows = detail::parse_csv(content);
    if (!rows.empty()) {
      const auto& header = rows.front().fields;
      auto col = [&](const char* name) -> int {
        auto it = std::find(header.begin(), header.end(), name);
        return it == header.end() ? -1 : static_cast<int>(it - header.begin());
      };
      const int cu = col("user_id"), ci = col("item_id"), cr = col("rating"), ct = col("text"),
                cts = col("timestamp");
      if (cu < 0 || ci < 0 || cr < 0 || ct < 0)
        throw Error(path.string() + ": CSV header must contain user_id,item_id,rating,text");
      for (std::size_t k = 1; k < rows.size(); ++k) {
        const auto& row = rows[k];
        if (row.fields.size() == 1 && row.fields[0].empty()) continue;
        ++seen;
        if (!row.ok || row.fields.size() != header.size()) {
          ++corpus.malformed;
          continue;
        }
        auto rating = detail::parse_double(row.fields[cr]);
        if (!rating || row.fields[cu].empty() || row.fields[ci].empty()) {
          ++corpus.malformed;
          continue;
        }
        ReviewRecord r;
        r.user_id = row.fields[cu];
        r.item_id = row.fields[ci];
        r.rating = *rating * opt.rating_scale + opt.rating_offset;
        r.text = row.fields[ct];
        if (!detail::rating_in_range(r.rating, opt)) {
          ++corpus.malformed;
          continue;
        }
        if (cts >= 0 && !row.fields[cts].empty()) {
          if (auto ts = detail::parse_double(row.fields[cts])) r.timestamp = static_cast<std::int64_t>(*ts);
        }
        corpus.records.push_back(std::move(r));
      }
    }
  }

  if (seen == 0) spdlog::warn("{}: no records found", path.string());
  if (corpus.malformed > 0) spdlog::warn("{}: skipped {} malformed lines", path.string(), corpus.malformed);
  if (corpus.malformed > opt.malformed_allowance &&
      static_cast<double>(corpus.malformed) > opt.max_malformed_fraction * static_cast<double>(seen))
    throw Error(path.string() + ": " + std::to_string(corpus.malformed) + " of " + std::to_string(seen) +
                " lines are malformed");
  return corpus;
}

// ---------------------------------------------------------------------------
// Vocabulary

class Vocabulary {
 public:
  Vocabulary() : words_{"<pad>", "<unk>"} { rebuild_index(); }
  explicit Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
    CARP_ASSERT(words_.size() >= 2 && words_[0] == "<pad>" && words_[1] == "<unk>",
                "vocabulary must start with <pad>, <unk>");
    rebuild_index();
  }

  std::size_t size() const { return words_.size(); }
  const std::string& word(TokenId id) const { return words_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& words() const { return words_; }

  TokenId index_of(const std::string& w) const {
    auto it = index_.find(w);
    return it == index_.end() ? kOovToken : it->second;
  }
  bool contains(const std::string& w) const { return index_.count(w) > 0; }

  /// FNV-1a over the words in index order; pins checkpoints to a vocabulary.
  std::uint64_t hash() const {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& w : words_) {
      for (unsigned char ch : w) {
        h ^= ch;
        h *= 1099511628211ull;
      }
      h ^= 0xff;
      h *= 1099511628211ull;
    }
    return h;
  }

 private:
  void rebuild_index() {
    index_.clear();
    for (std::size_t i = 2; i < words_.size(); ++i) index_.emplace(words_[i], static_cast<TokenId>(i));
  }

  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> index_;
};

struct PreprocessConfig {
  std::size_t vocab_size = 8000;  // real words, excluding <pad>/<unk>
  std::size_t doc_cap = 300;
  bool remove_stopwords = true;
  double max_doc_frequency = 0.5;
};

/// Lowercase + alphanumeric tokenization, stopword and high-document-frequency
/// filtering, top-V vocabulary. Records whose review becomes empty are
/// dropped. Out-of-vocabulary tokens map to kOovToken.
inline std::pair<ReviewCorpus, Vocabulary> preprocess(const ReviewCorpus& input, const PreprocessConfig& cfg) {
  if (cfg.vocab_size < 100) throw Error("vocabulary cap must be at least 100");
  const auto& stop = text::english_stopwords();

  std::vector<std::vector<text::Token>> toks(input.records.size());
  std::unordered_map<std::string, std::size_t> df;
  for (std::size_t r = 0; r < input.records.size(); ++r) {
    auto all = text::tokenize(input.records[r].text);
    if (cfg.remove_stopwords)
      std::erase_if(all, [&](const text::Token& t) { return stop.count(t.word) > 0; });
    std::unordered_set<std::string> uniq;
    for (const auto& t : all)
      if (uniq.insert(t.word).second) ++df[t.word];
    toks[r] = std::move(all);
  }

  const double n_docs = static_cast<double>(input.records.size());
  std::unordered_set<std::string> too_common;
  for (const auto& [w, c] : df)
    if (static_cast<double>(c) > cfg.max_doc_frequency * n_docs) too_common.insert(w);

  std::unordered_map<std::string, std::size_t> tf;
  for (auto& t : toks) {
    std::erase_if(t, [&](const text::Token& x) { return too_common.count(x.word) > 0; });
    for (const auto& x : t) ++tf[x.word];
  }

  std::vector<std::pair<std::string, std::size_t>> ranked(tf.begin(), tf.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (ranked.size() > cfg.vocab_size) ranked.resize(cfg.vocab_size);
  std::vector<std::string> words{"<pad>", "<unk>"};
  for (auto& [w, c] : ranked) words.push_back(w);
  Vocabulary vocab(std::move(words));

  ReviewCorpus out;
  out.malformed = input.malformed;
  std::size_t dropped = 0;
  for (std::size_t r = 0; r < input.records.size(); ++r) {
    if (toks[r].empty()) {
      ++dropped;
      continue;
    }
    ReviewRecord rec = input.records[r];
    rec.tokens.clear();
    rec.offsets.clear();
    for (const auto& t : toks[r]) {
      rec.tokens.push_back(vocab.index_of(t.word));
      rec.offsets.push_back(static_cast<std::uint32_t>(t.begin));
    }
    out.records.push_back(std::move(rec));
  }
  if (dropped > 0) spdlog::info("preprocess: dropped {} records with empty reviews", dropped);
  return {std::move(out), std::move(vocab)};
}

// ---------------------------------------------------------------------------
// Splits

enum class SplitPart : int { kTrain = 0, kValidation = 1, kTest = 2 };

inline const char* to_string(SplitPart p) {
  switch (p) {
    case SplitPart::kTrain: return "train";
    case SplitPart::kValidation: return "validation";
    default: return "test";
  }
}

struct Interaction {
  std::int32_t user = 0;
  std::int32_t item = 0;
  float rating = 0.f;
  Sentiment label = Sentiment::kNeg;
  std::size_t record = 0;  // index into the preprocessed corpus
};

struct SplitConfig {
  double test_fraction = 0.2;
  double validation_fraction = 0.1;  // of the training portion
  double pi = 3.0;
};

struct SplitCorpus {
  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;
  std::vector<Interaction> train;
  std::vector<Interaction> validation;
  std::vector<Interaction> test;
  double pi = 3.0;
  std::size_t forced_into_train = 0;

  std::size_t num_users() const { return user_ids.size(); }
  std::size_t num_items() const { return item_ids.size(); }
};

inline Sentiment label_for(double rating, double pi) { return rating > pi ? Sentiment::kPos : Sentiment::kNeg; }

namespace detail {

// Unbiased bounded draw on top of mt19937_64, independent of the standard
// library's distribution implementation so splits are portable.
inline std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do x = rng();
  while (x >= limit);
  return x % n;
}

template <class V>
void fisher_yates(V& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[bounded(rng, i)]);
}

}  // namespace detail

/// Seeded 80/20 train/test split over (user, item) pair groups, then 10% of
/// the training portion to validation. Every user and item keeps at least
/// one training interaction.
inline SplitCorpus split(const ReviewCorpus& corpus, std::uint64_t seed, const SplitConfig& cfg = {}) {
  SplitCorpus out;
  out.pi = cfg.pi;
  std::unordered_map<std::string, std::int32_t> uidx, iidx;
  std::vector<std::int32_t> rec_user(corpus.records.size()), rec_item(corpus.records.size());
  for (std::size_t r = 0; r < corpus.records.size(); ++r) {
    const auto& rec = corpus.records[r];
    auto [uit, unew] = uidx.try_emplace(rec.user_id, static_cast<std::int32_t>(out.user_ids.size()));
    if (unew) out.user_ids.push_back(rec.user_id);
    auto [iit, inew] = iidx.try_emplace(rec.item_id, static_cast<std::int32_t>(out.item_ids.size()));
    if (inew) out.item_ids.push_back(rec.item_id);
    rec_user[r] = uit->second;
    rec_item[r] = iit->second;
  }

  // Group duplicate (user, item) pairs so the parts stay disjoint on pairs.
  std::map<std::pair<std::int32_t, std::int32_t>, std::size_t> group_of;
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t r = 0; r < corpus.records.size(); ++r) {
    auto [it, fresh] = group_of.try_emplace({rec_user[r], rec_item[r]}, groups.size());
    if (fresh) groups.emplace_back();
    groups[it->second].push_back(r);
  }
  const std::size_t g = groups.size();
  std::vector<std::size_t> order(g);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  detail::fisher_yates(order, rng);

  const auto n_test = static_cast<std::size_t>(std::llround(cfg.test_fraction * static_cast<double>(g)));
  std::vector<SplitPart> part(g, SplitPart::kTrain);
  for (std::size_t k = g - std::min(n_test, g); k < g; ++k) part[order[k]] = SplitPart::kTest;

  std::vector<std::size_t> user_train(out.num_users(), 0), item_train(out.num_items(), 0);
  auto group_user = [&](std::size_t gi) { return rec_user[groups[gi][0]]; };
  auto group_item = [&](std::size_t gi) { return rec_item[groups[gi][0]]; };
  for (std::size_t gi = 0; gi < g; ++gi)
    if (part[gi] == SplitPart::kTrain) {
      ++user_train[group_user(gi)];
      ++item_train[group_item(gi)];
    }
  for (std::size_t k = 0; k < g; ++k) {
    const std::size_t gi = order[k];
    if (part[gi] != SplitPart::kTest) continue;
    if (user_train[group_user(gi)] == 0 || item_train[group_item(gi)] == 0) {
      part[gi] = SplitPart::kTrain;
      ++user_train[group_user(gi)];
      ++item_train[group_item(gi)];
      ++out.forced_into_train;
    }
  }
  if (out.forced_into_train > 0)
    spdlog::info("split: {} pairs forced into train for coverage (test share {:.3f} instead of {:.3f})",
                 out.forced_into_train,
                 g ? static_cast<double>(std::count(part.begin(), part.end(), SplitPart::kTest)) / g : 0.0,
                 cfg.test_fraction);

  std::vector<std::size_t> train_groups;
  for (std::size_t k = 0; k < g; ++k)
    if (part[order[k]] == SplitPart::kTrain) train_groups.push_back(order[k]);
  detail::fisher_yates(train_groups, rng);
  const auto n_val =
      static_cast<std::size_t>(std::llround(cfg.validation_fraction * static_cast<double>(train_groups.size())));
  std::size_t taken = 0;
  for (std::size_t gi : train_groups) {
    if (taken >= n_val) break;
    if (user_train[group_user(gi)] > 1 && item_train[group_item(gi)] > 1) {
      part[gi] = SplitPart::kValidation;
      --user_train[group_user(gi)];
      --item_train[group_item(gi)];
      ++taken;
    }
  }

  for (std::size_t gi = 0; gi < g; ++gi) {
    for (std::size_t r : groups[gi]) {
      Interaction x;
      x.user = rec_user[r];
      x.item = rec_item[r];
      x.rating = static_cast<float>(corpus.records[r].rating);
      x.label = label_for(corpus.records[r].rating, cfg.pi);
      x.record = r;
      switch (part[gi]) {
        case SplitPart::kTrain: out.train.push_back(x); break;
        case SplitPart::kValidation: out.validation.push_back(x); break;
        case SplitPart::kTest: out.test.push_back(x); break;
      }
    }
  }
  auto by_record = [](const Interaction& a, const Interaction& b) { return a.record < b.record; };
  std::sort(out.train.begin(), out.train.end(), by_record);
  std::sort(out.validation.begin(), out.validation.end(), by_record);
  std::sort(out.test.begin(), out.test.end(), by_record);
  return out;
}

// ---------------------------------------------------------------------------
// Documents

/// Fixed-length token sequences for one side (users or items), row-major
/// [entity][position], plus the true length and the source of every token.
struct DocumentSet {
  std::size_t cap = 0;
  std::vector<TokenId> tokens;          // count * cap
  std::vector<std::int32_t> lengths;    // count
  std::vector<std::int32_t> src_record; // count * cap, -1 for padding
  std::vector<std::int32_t> src_token;  // count * cap, -1 for padding

  std::size_t count() const { return lengths.size(); }
  std::span<const TokenId> doc(std::size_t e) const { return {tokens.data() + e * cap, cap}; }
  int length(std::size_t e) const { return lengths[e]; }
  bool mask(std::size_t e, std::size_t j) const { return static_cast<int>(j) < lengths[e]; }
};

struct DocumentBank {
  DocumentSet users;
  DocumentSet items;
  std::size_t cap() const { return users.cap; }
};

namespace detail {

inline DocumentSet build_side(const ReviewCorpus& corpus, const std::vector<Interaction>& train, std::size_t count,
                              std::size_t cap, bool user_side) {
  std::vector<std::vector<std::size_t>> recs(count);
  for (const auto& x : train) recs[static_cast<std::size_t>(user_side ? x.user : x.item)].push_back(x.record);
  DocumentSet set;
  set.cap = cap;
  set.tokens.assign(count * cap, kPadToken);
  set.src_record.assign(count * cap, -1);
  set.src_token.assign(count * cap, -1);
  set.lengths.assign(count, 0);
  for (std::size_t e = 0; e < count; ++e) {
    auto& rs = recs[e];
    CARP_ASSERT(!rs.empty(), std::string(user_side ? "user " : "item ") + std::to_string(e) +
                                 " has no training reviews");
    std::stable_sort(rs.begin(), rs.end(), [&](std::size_t a, std::size_t b) {
      const auto ta = corpus.records[a].timestamp.value_or(0), tb = corpus.records[b].timestamp.value_or(0);
      return ta != tb ? ta < tb : a < b;
    });
    std::size_t pos = 0;
    for (std::size_t r : rs) {
      const auto& toks = corpus.records[r].tokens;
      for (std::size_t t = 0; t < toks.size() && pos < cap; ++t, ++pos) {
        set.tokens[e * cap + pos] = toks[t];
        set.src_record[e * cap + pos] = static_cast<std::int32_t>(r);
        set.src_token[e * cap + pos] = static_cast<std::int32_t>(t);
      }
      if (pos >= cap) break;
    }
    set.lengths[e] = static_cast<std::int32_t>(pos);
  }
  return set;
}

}  // namespace detail

/// User/item documents from TRAIN interactions only, earliest reviews first,
/// truncated to `cap` tokens.
inline DocumentBank build_documents(const SplitCorpus& split, const ReviewCorpus& corpus, std::size_t cap) {
  CARP_ASSERT(cap >= 1, "document cap must be positive");
  DocumentBank bank;
  bank.users = detail::build_side(corpus, split.train, split.num_users(), cap, true);
  bank.items = detail::build_side(corpus, split.train, split.num_items(), cap, false);
  return bank;
}

struct StatsReport {
  std::size_t users = 0, items = 0, ratings = 0;
  double words_per_review = 0, words_per_user = 0, words_per_item = 0;
  double pos_neg_ratio = 0;  // +inf when there are no negative interactions
  double density = 0;        // fraction, not percent
  std::size_t positives = 0, negatives = 0;
};

inline StatsReport corpus_stats(const SplitCorpus& split, const DocumentBank& bank, const ReviewCorpus& corpus) {
  StatsReport s;
  s.users = split.num_users();
  s.items = split.num_items();
  std::size_t words = 0;
  for (const auto* part : {&split.train, &split.validation, &split.test})
    for (const auto& x : *part) {
      ++s.ratings;
      words += corpus.records[x.record].tokens.size();
      (x.label == Sentiment::kPos ? s.positives : s.negatives)++;
    }
  auto mean_len = [](const DocumentSet& d) {
    if (d.count() == 0) return 0.0;
    return std::accumulate(d.lengths.begin(), d.lengths.end(), 0.0) / static_cast<double>(d.count());
  };
  s.words_per_review = s.ratings ? static_cast<double>(words) / static_cast<double>(s.ratings) : 0.0;
  s.words_per_user = mean_len(bank.users);
  s.words_per_item = mean_len(bank.items);
  s.pos_neg_ratio = s.negatives == 0 ? std::numeric_limits<double>::infinity()
                                     : static_cast<double>(s.positives) / static_cast<double>(s.negatives);
  s.density = (s.users && s.items) ? static_cast<double>(s.ratings) / (static_cast<double>(s.users) * s.items) : 0.0;
  return s;
}

inline nlohmann::json to_json(const StatsReport& s) {
  nlohmann::json j;
  j["users"] = s.users;
  j["items"] = s.items;
  j["ratings"] = s.ratings;
  j["words_per_review"] = s.words_per_review;
  j["words_per_user"] = s.words_per_user;
  j["words_per_item"] = s.words_per_item;
  // JSON has no infinity; the sentinel is the string "inf".
  if (std::isinf(s.pos_neg_ratio))
    j["pos_neg_ratio"] = "inf";
  else
    j["pos_neg_ratio"] = s.pos_neg_ratio;
  j["density"] = s.density;
  j["positives"] = s.positives;
  j["negatives"] = s.negatives;
  return j;
}

}  // namespace carp
