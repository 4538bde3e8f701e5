#pragma once
// Shared test helpers: temporary directories, synthetic review corpora and
// tiny prepared datasets.

#include "carp/carp.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

namespace carp::testing {

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "carp") {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream(p, std::ios::binary | std::ios::trunc) << content;
}

/// Reviews whose words and ratings follow a hidden per-item quality and
/// per-user leniency, so a model has something learnable.
inline ReviewCorpus synthetic_corpus(int users, int items, int per_user, std::uint64_t seed) {
  static const std::vector<std::string> good = {"great",  "solid",    "sturdy", "bright", "warm",
                                                "clear",  "excellent", "smooth", "durable", "crisp"};
  static const std::vector<std::string> bad = {"broke",    "noisy", "cheap", "flimsy", "buzz",
                                               "returned", "awful", "weak",  "hum",    "rattle"};
  static const std::vector<std::string> nouns = {"guitar", "strap", "cable", "tuner", "pedal",
                                                 "string", "amp",   "case",  "pick",  "stand"};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0, 1);
  std::normal_distribution<double> noise(0, 0.3);
  ReviewCorpus c;
  for (int u = 0; u < users; ++u) {
    std::vector<int> chosen(static_cast<std::size_t>(items));
    for (int i = 0; i < items; ++i) chosen[static_cast<std::size_t>(i)] = i;
    detail::fisher_yates(chosen, rng);
    for (int n = 0; n < std::min(per_user, items); ++n) {
      const int it = chosen[static_cast<std::size_t>(n)];
      const double q = std::clamp((it % 5) / 4.0 + (u % 3 - 1) * 0.15, 0.0, 1.0);
      const double r = std::clamp(std::round(1 + 4 * q + noise(rng)), 1.0, 5.0);
      std::string text;
      for (int s = 0; s < 3; ++s) {
        const auto& pool = unit(rng) < q ? good : bad;
        for (int w = 0; w < 3; ++w) text += pool[detail::bounded(rng, pool.size())] + " ";
        text += nouns[static_cast<std::size_t>(it % 10)] + " " + nouns[detail::bounded(rng, nouns.size())] + ". ";
      }
      ReviewRecord rec;
      rec.user_id = "U" + std::to_string(u);
      rec.item_id = "I" + std::to_string(it);
      rec.rating = r;
      rec.text = text;
      rec.timestamp = 1000 + u * 100 + n;
      c.records.push_back(std::move(rec));
    }
  }
  return c;
}

inline std::string to_jsonl(const ReviewCorpus& c) {
  std::string out;
  for (const auto& r : c.records) {
    nlohmann::json j{{"reviewerID", r.user_id}, {"asin", r.item_id}, {"overall", r.rating}, {"reviewText", r.text}};
    if (r.timestamp) j["unixReviewTime"] = *r.timestamp;
    out += j.dump() + "\n";
  }
  return out;
}

inline Dataset make_dataset(const ReviewCorpus& raw, std::uint64_t seed, std::size_t vocab = 100,
                            std::size_t cap = 40) {
  PreprocessConfig pc;
  pc.vocab_size = vocab;
  pc.doc_cap = cap;
  Dataset ds;
  auto [corpus, v] = preprocess(raw, pc);
  ds.corpus = std::move(corpus);
  ds.vocab = std::move(v);
  ds.split = split(ds.corpus, seed);
  ds.bank = build_documents(ds.split, ds.corpus, cap);
  ds.seed = seed;
  ds.stats = corpus_stats(ds.split, ds.bank, ds.corpus);
  return ds;
}

/// A model configuration small enough for finite differences.
inline ModelConfig tiny_config(const Dataset& ds, int m = 2, int k = 3, int tau = 2,
                               RoutingKind routing = RoutingKind::kBiAgreement) {
  ModelConfig c;
  c.vocab_size = ds.vocab.size();
  c.num_users = ds.split.num_users();
  c.num_items = ds.split.num_items();
  c.embed_dim = 4;
  c.filters = 3;
  c.window = 3;
  c.latent_dim = k;
  c.slots = m;
  c.routing_iters = tau;
  c.routing = routing;
  c.keep_prob = 1.0;
  c.max_rating = 5.0;
  return c;
}

}  // namespace carp::testing
