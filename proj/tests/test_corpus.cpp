#include "fixtures.hpp"

#include <gtest/gtest.h>
#include <zlib.h>

#include <set>

using namespace carp;
using carp::testing::TempDir;
using carp::testing::write_file;

namespace {

ReviewRecord rec(std::string u, std::string i, double r, std::string text, std::int64_t ts = 0) {
  ReviewRecord x;
  x.user_id = std::move(u);
  x.item_id = std::move(i);
  x.rating = r;
  x.text = std::move(text);
  x.timestamp = ts;
  return x;
}

std::string n_words(const std::string& prefix, int n) {
  std::string s;
  for (int i = 0; i < n; ++i) s += prefix + std::to_string(i) + " ";
  return s;
}

}  // namespace

// --- load_reviews ---------------------------------------------------------

TEST(LoadReviews, OneGoodOneTruncatedLine) {
  TempDir tmp;
  write_file(tmp / "r.jsonl",
             R"({"reviewerID":"A1","asin":"B1","overall":5.0,"reviewText":"Great strings.","unixReviewTime":7})"
             "\n"
             R"({"reviewerID":"A2","asin":"B1","overall":4.0,"reviewTe)"
             "\n");
  const auto c = load_reviews(tmp / "r.jsonl", InputFormat::kAmazonJsonl);
  ASSERT_EQ(c.records.size(), 1u);
  EXPECT_EQ(c.malformed, 1u);
  EXPECT_EQ(c.records[0].user_id, "A1");
  EXPECT_EQ(c.records[0].item_id, "B1");
  EXPECT_DOUBLE_EQ(c.records[0].rating, 5.0);
  EXPECT_EQ(c.records[0].timestamp, 7);
}

TEST(LoadReviews, EmptyFileGivesEmptyCorpus) {
  TempDir tmp;
  write_file(tmp / "empty.jsonl", "");
  const auto c = load_reviews(tmp / "empty.jsonl", InputFormat::kAmazonJsonl);
  EXPECT_TRUE(c.records.empty());
  EXPECT_EQ(c.malformed, 0u);
}

TEST(LoadReviews, UnreadableFileIsFatal) {
  EXPECT_THROW(load_reviews("/nonexistent/reviews.jsonl", InputFormat::kAmazonJsonl), Error);
}

TEST(LoadReviews, TooManyMalformedLinesIsFatal) {
  TempDir tmp;
  std::string s;
  for (int i = 0; i < 16; ++i)
    s += R"({"reviewerID":"A","asin":"B","overall":3,"reviewText":"ok"})"
         "\n";
  for (int i = 0; i < 4; ++i) s += "{not json\n";
  write_file(tmp / "bad.jsonl", s);
  try {
    load_reviews(tmp / "bad.jsonl", InputFormat::kAmazonJsonl);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("4 of 20"), std::string::npos) << e.what();
  }
}

TEST(LoadReviews, RatingOutsideRangeIsMalformed) {
  TempDir tmp;
  std::string s;
  for (int i = 0; i < 20; ++i)
    s += R"({"reviewerID":"A","asin":"B","overall":4,"reviewText":"ok"})"
         "\n";
  s += R"({"reviewerID":"A","asin":"B","overall":9,"reviewText":"ok"})"
       "\n";
  write_file(tmp / "r.jsonl", s);
  const auto c = load_reviews(tmp / "r.jsonl", InputFormat::kAmazonJsonl);
  EXPECT_EQ(c.records.size(), 20u);
  EXPECT_EQ(c.malformed, 1u);
}

TEST(LoadReviews, GzipInput) {
  TempDir tmp;
  const std::string line = R"({"reviewerID":"A","asin":"B","overall":2,"reviewText":"meh"})"
                           "\n";
  gzFile f = gzopen((tmp / "r.jsonl.gz").c_str(), "wb");
  gzwrite(f, line.data(), static_cast<unsigned>(line.size()));
  gzclose(f);
  const auto c = load_reviews(tmp / "r.jsonl.gz", InputFormat::kAmazonJsonl);
  ASSERT_EQ(c.records.size(), 1u);
  EXPECT_EQ(c.records[0].text, "meh");
}

TEST(LoadReviews, GenericCsvWithQuotes) {
  TempDir tmp;
  write_file(tmp / "r.csv",
             "user_id,item_id,rating,text,timestamp\n"
             "u1,i1,5,\"Loud, \"\"clean\"\" tone\nsecond line\",12\n"
             "u2,i1,2,thin sound,\n");
  const auto c = load_reviews(tmp / "r.csv", InputFormat::kGenericCsv);
  ASSERT_EQ(c.records.size(), 2u);
  EXPECT_EQ(c.records[0].text, "Loud, \"clean\" tone\nsecond line");
  EXPECT_EQ(c.records[0].timestamp, 12);
  EXPECT_FALSE(c.records[1].timestamp.has_value());
}

TEST(LoadReviews, CsvMissingColumnIsFatal) {
  TempDir tmp;
  write_file(tmp / "r.csv", "user_id,item_id,text\nu,i,hello\n");
  EXPECT_THROW(load_reviews(tmp / "r.csv", InputFormat::kGenericCsv), Error);
}

TEST(LoadReviews, RatingRescale) {
  TempDir tmp;
  write_file(tmp / "r.csv", "user_id,item_id,rating,text\nu,i,20,great\nu,j,4,bad\n");
  LoadOptions opt;
  opt.rating_scale = 0.25;
  const auto c = load_reviews(tmp / "r.csv", InputFormat::kGenericCsv, opt);
  ASSERT_EQ(c.records.size(), 2u);
  EXPECT_DOUBLE_EQ(c.records[0].rating, 5.0);
  EXPECT_DOUBLE_EQ(c.records[1].rating, 1.0);
}

// --- preprocess ------------------------------------------------------------

TEST(Preprocess, StopwordsRemovedAndOffsetsKept) {
  ReviewCorpus c;
  c.records.push_back(rec("u", "i", 5, "The battery can sustains a long time"));
  c.records.push_back(rec("u", "j", 4, "guitar tuner"));
  c.records.push_back(rec("v", "j", 4, "strap cable"));
  const auto [out, vocab] = preprocess(c, {});
  ASSERT_EQ(out.records.size(), 3u);
  const auto& r = out.records[0];
  std::vector<std::string> ws;
  for (auto t : r.tokens) ws.push_back(vocab.word(t));
  EXPECT_EQ(ws, (std::vector<std::string>{"battery", "sustains", "long", "time"}));
  EXPECT_EQ(r.text.substr(r.offsets[0], 7), "battery");
  EXPECT_EQ(r.text.substr(r.offsets[3], 4), "time");
}

TEST(Preprocess, AllStopwordReviewDropped) {
  ReviewCorpus c;
  c.records.push_back(rec("u", "i", 5, "it is what it is"));
  c.records.push_back(rec("u", "j", 4, "amazing pedal"));
  c.records.push_back(rec("v", "j", 4, "solid stand"));
  const auto [out, vocab] = preprocess(c, {});
  ASSERT_EQ(out.records.size(), 2u);
  EXPECT_EQ(out.records[0].item_id, "j");
}

TEST(Preprocess, FrequentWordsExcluded) {
  ReviewCorpus c;
  c.records.push_back(rec("u", "a", 5, "guitar tone"));
  c.records.push_back(rec("u", "b", 5, "guitar strap"));
  c.records.push_back(rec("v", "a", 5, "guitar cable"));
  c.records.push_back(rec("v", "b", 5, "pedal"));
  const auto [out, vocab] = preprocess(c, {});
  EXPECT_FALSE(vocab.contains("guitar"));  // 3 of 4 documents
  EXPECT_TRUE(vocab.contains("tone"));
}

TEST(Preprocess, ExactlyHalfIsKept) {
  ReviewCorpus c;
  c.records.push_back(rec("u", "a", 5, "amp tone"));
  c.records.push_back(rec("u", "b", 5, "amp strap"));
  c.records.push_back(rec("v", "a", 5, "cable"));
  c.records.push_back(rec("v", "b", 5, "pedal"));
  const auto [out, vocab] = preprocess(c, {});
  EXPECT_TRUE(vocab.contains("amp"));
}

TEST(Preprocess, VocabularyCapOrderAndOov) {
  ReviewCorpus c;
  // 150 distinct words, word k appearing in (k % 3) + 1 records out of many.
  for (int r = 0; r < 40; ++r) {
    std::string text;
    for (int k = 0; k < 150; ++k)
      if (r < (k % 3) + 1) text += "w" + std::to_string(1000 + k) + " ";
    text += "filler" + std::to_string(r);
    c.records.push_back(rec("u" + std::to_string(r % 4), "i" + std::to_string(r % 5), 4, text));
  }
  PreprocessConfig cfg;
  cfg.vocab_size = 100;
  const auto [out, vocab] = preprocess(c, cfg);
  EXPECT_EQ(vocab.size(), 102u);
  EXPECT_EQ(vocab.word(kPadToken), "<pad>");
  EXPECT_EQ(vocab.word(kOovToken), "<unk>");
  // Frequency 3 words first (50 of them, k % 3 == 2), ties broken alphabetically.
  EXPECT_EQ(vocab.word(2), "w1002");
  EXPECT_EQ(vocab.word(3), "w1005");
  bool saw_oov = false;
  for (const auto& r : out.records)
    for (auto t : r.tokens) {
      EXPECT_LT(static_cast<std::size_t>(t), vocab.size());
      EXPECT_NE(t, kPadToken);
      saw_oov |= t == kOovToken;
    }
  EXPECT_TRUE(saw_oov);
  EXPECT_THROW(preprocess(c, PreprocessConfig{.vocab_size = 50}), Error);
}

TEST(Vocabulary, HashChangesWithContent) {
  Vocabulary a({"<pad>", "<unk>", "x", "y"}), b({"<pad>", "<unk>", "y", "x"});
  EXPECT_NE(a.hash(), b.hash());
  EXPECT_EQ(a.hash(), Vocabulary({"<pad>", "<unk>", "x", "y"}).hash());
  EXPECT_EQ(a.index_of("zzz"), kOovToken);
}

// --- split -----------------------------------------------------------------

TEST(Split, Labels) {
  EXPECT_EQ(label_for(5, 3), Sentiment::kPos);
  EXPECT_EQ(label_for(3, 3), Sentiment::kNeg);
  EXPECT_EQ(label_for(3.5, 3), Sentiment::kPos);
  EXPECT_EQ(label_for(1, 3), Sentiment::kNeg);
}

namespace {

bool same(const std::vector<Interaction>& a, const std::vector<Interaction>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].user != b[i].user || a[i].item != b[i].item || a[i].rating != b[i].rating || a[i].label != b[i].label ||
        a[i].record != b[i].record)
      return false;
  return true;
}

// 200-record fixture: 25 users x 8 items each, drawn from 20 items.
ReviewCorpus fixture200(std::uint64_t seed) {
  auto raw = carp::testing::synthetic_corpus(25, 20, 8, seed);
  return preprocess(raw, PreprocessConfig{.vocab_size = 100}).first;
}

}  // namespace

TEST(Split, DeterministicForSameSeed) {
  const auto c = fixture200(3);
  ASSERT_EQ(c.records.size(), 200u);
  for (std::uint64_t seed : {1u, 7u, 99u}) {
    const auto a = split(c, seed), b = split(c, seed);
    EXPECT_TRUE(same(a.train, b.train));
    EXPECT_TRUE(same(a.validation, b.validation));
    EXPECT_TRUE(same(a.test, b.test));
    EXPECT_EQ(a.user_ids, b.user_ids);
    EXPECT_EQ(a.item_ids, b.item_ids);
  }
  EXPECT_FALSE(same(split(c, 1).test, split(c, 2).test));
}

TEST(Split, DeterministicOnDisk) {
  const auto raw = carp::testing::synthetic_corpus(25, 20, 8, 3);
  TempDir tmp;
  for (const char* d : {"a", "b"}) {
    const auto ds = carp::testing::make_dataset(raw, 11);
    save_dataset(tmp / d, ds);
  }
  for (const char* f : {"split.csv", "documents.bin", "vocab.tsv", "users.tsv", "items.tsv"})
    EXPECT_EQ(io::read_text(tmp / "a" / f), io::read_text(tmp / "b" / f)) << f;
}

TEST(Split, PropertiesHoldOverSeeds) {
  const auto c = fixture200(5);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto s = split(c, seed);
    const std::size_t total = s.train.size() + s.validation.size() + s.test.size();
    ASSERT_EQ(total, c.records.size());

    // Disjoint on pairs, and every record used exactly once.
    std::set<std::pair<int, int>> tr, va, te;
    std::set<std::size_t> recs;
    for (auto& x : s.train) tr.insert({x.user, x.item}), recs.insert(x.record);
    for (auto& x : s.validation) va.insert({x.user, x.item}), recs.insert(x.record);
    for (auto& x : s.test) te.insert({x.user, x.item}), recs.insert(x.record);
    EXPECT_EQ(recs.size(), total);
    for (auto& p : va) EXPECT_FALSE(tr.count(p) || te.count(p));
    for (auto& p : te) EXPECT_FALSE(tr.count(p));

    // Coverage: every user and item keeps a training interaction.
    std::vector<int> ucount(s.num_users()), icount(s.num_items());
    for (auto& x : s.train) ++ucount[x.user], ++icount[x.item];
    for (int n : ucount) EXPECT_GT(n, 0);
    for (int n : icount) EXPECT_GT(n, 0);

    // Proportions: 80:20 up to coverage moves; validation ~10% of the train portion.
    const double test_share = static_cast<double>(s.test.size()) / total;
    EXPECT_LE(test_share, 0.2 + 1e-9);
    EXPECT_GE(test_share + static_cast<double>(s.forced_into_train) / total, 0.2 - 0.01);
    const double val_share = static_cast<double>(s.validation.size()) / (s.train.size() + s.validation.size());
    EXPECT_NEAR(val_share, 0.1, 0.02);

    // Label partition is decided only by r > pi.
    for (const auto* part : {&s.train, &s.validation, &s.test})
      for (auto& x : *part) EXPECT_EQ(x.label == Sentiment::kPos, x.rating > 3.0);
  }
}

TEST(Split, LeakageFreeDocuments) {
  const auto c = fixture200(8);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = split(c, seed);
    const auto bank = build_documents(s, c, 300);
    std::set<std::int32_t> held_out;
    for (auto& x : s.validation) held_out.insert(static_cast<std::int32_t>(x.record));
    for (auto& x : s.test) held_out.insert(static_cast<std::int32_t>(x.record));
    for (const auto* set : {&bank.users, &bank.items})
      for (auto r : set->src_record)
        if (r >= 0) { EXPECT_FALSE(held_out.count(r)) << "record " << r; }
    for (std::size_t u = 0; u < bank.users.count(); ++u) EXPECT_GT(bank.users.length(u), 0);
    for (std::size_t i = 0; i < bank.items.count(); ++i) EXPECT_GT(bank.items.length(i), 0);
  }
}

TEST(Split, DuplicatePairsStayTogether) {
  ReviewCorpus c;
  for (int r = 0; r < 60; ++r) c.records.push_back(rec("u" + std::to_string(r % 6), "i" + std::to_string(r % 10), 4, "x"));
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = split(c, seed);
    std::map<std::pair<int, int>, int> where;
    auto visit = [&](const std::vector<Interaction>& v, int part) {
      for (auto& x : v) {
        auto [it, fresh] = where.try_emplace({x.user, x.item}, part);
        EXPECT_EQ(it->second, part);
      }
    };
    visit(s.train, 0);
    visit(s.validation, 1);
    visit(s.test, 2);
  }
}

// --- documents -------------------------------------------------------------

TEST(Documents, ConcatenationTruncatedToCap) {
  ReviewCorpus raw;
  raw.records.push_back(rec("u", "a", 5, n_words("alpha", 200), 1));
  raw.records.push_back(rec("u", "b", 5, n_words("beta", 250), 2));
  raw.records.push_back(rec("v", "a", 2, n_words("gamma", 10), 3));
  raw.records.push_back(rec("v", "b", 2, n_words("delta", 10), 4));
  const auto [c, vocab] = preprocess(raw, PreprocessConfig{.vocab_size = 1000});
  SplitCorpus s = split(c, 1, SplitConfig{.test_fraction = 0, .validation_fraction = 0});
  ASSERT_EQ(s.train.size(), 4u);
  const auto bank = build_documents(s, c, 300);
  EXPECT_EQ(bank.users.length(0), 300);
  for (std::size_t j = 0; j < 300; ++j) EXPECT_TRUE(bank.users.mask(0, j));
  // First 200 tokens from the earlier review, then the first 100 of the later one.
  EXPECT_EQ(vocab.word(bank.users.doc(0)[0]), "alpha0");
  EXPECT_EQ(vocab.word(bank.users.doc(0)[199]), "alpha199");
  EXPECT_EQ(vocab.word(bank.users.doc(0)[200]), "beta0");
  EXPECT_EQ(vocab.word(bank.users.doc(0)[299]), "beta99");
  EXPECT_EQ(bank.users.src_token[299], 99);
}

TEST(Documents, ShortDocumentPadded) {
  ReviewCorpus raw;
  raw.records.push_back(rec("u", "a", 5, n_words("tok", 10), 1));
  // A single document: every word has document frequency 1.
  const auto [c, vocab] = preprocess(raw, PreprocessConfig{.max_doc_frequency = 1.0});
  const auto s = split(c, 1);
  const auto bank = build_documents(s, c, 300);
  EXPECT_EQ(bank.users.length(0), 10);
  const auto doc = bank.users.doc(0);
  ASSERT_EQ(doc.size(), 300u);
  for (std::size_t j = 0; j < 300; ++j) {
    EXPECT_EQ(bank.users.mask(0, j), j < 10);
    if (j >= 10) { EXPECT_EQ(doc[j], kPadToken); }
  }
}

TEST(Documents, TimestampOrderThenInputOrder) {
  ReviewCorpus raw;
  raw.records.push_back(rec("u", "a", 5, "charlie", 9));
  raw.records.push_back(rec("u", "b", 5, "alpha", 1));
  raw.records.push_back(rec("u", "c", 5, "bravo", 1));
  const auto [c, vocab] = preprocess(raw, {});
  const auto s = split(c, 1, SplitConfig{.test_fraction = 0, .validation_fraction = 0});
  const auto bank = build_documents(s, c, 10);
  const auto doc = bank.users.doc(0);
  EXPECT_EQ(vocab.word(doc[0]), "alpha");
  EXPECT_EQ(vocab.word(doc[1]), "bravo");
  EXPECT_EQ(vocab.word(doc[2]), "charlie");
}

// --- stats -----------------------------------------------------------------

TEST(Stats, SingleRecord) {
  ReviewCorpus raw;
  raw.records.push_back(rec("u", "a", 5, "nice amp"));
  const auto [c, vocab] = preprocess(raw, PreprocessConfig{.max_doc_frequency = 1.0});
  const auto s = split(c, 1);
  const auto bank = build_documents(s, c, 300);
  const auto st = corpus_stats(s, bank, c);
  EXPECT_EQ(st.users, 1u);
  EXPECT_EQ(st.items, 1u);
  EXPECT_EQ(st.ratings, 1u);
  EXPECT_DOUBLE_EQ(st.density, 1.0);
  EXPECT_TRUE(std::isinf(st.pos_neg_ratio));
  EXPECT_EQ(to_json(st)["pos_neg_ratio"], "inf");
  EXPECT_DOUBLE_EQ(st.words_per_review, 2.0);
}

TEST(Stats, RatioAndDensity) {
  const auto raw = carp::testing::synthetic_corpus(10, 10, 4, 2);
  const auto ds = carp::testing::make_dataset(raw, 1);
  EXPECT_EQ(ds.stats.ratings, 40u);
  EXPECT_DOUBLE_EQ(ds.stats.density, 40.0 / (ds.stats.users * ds.stats.items));
  EXPECT_EQ(ds.stats.positives + ds.stats.negatives, 40u);
  EXPECT_DOUBLE_EQ(ds.stats.pos_neg_ratio, static_cast<double>(ds.stats.positives) / ds.stats.negatives);
}

// --- dataset directory -----------------------------------------------------

TEST(Dataset, RoundTrip) {
  const auto raw = carp::testing::synthetic_corpus(12, 10, 5, 4);
  auto ds = carp::testing::make_dataset(raw, 6);
  ds.max_rating = 5;
  TempDir tmp;
  save_dataset(tmp.path(), ds);
  const auto back = load_dataset(tmp.path());
  EXPECT_EQ(back.vocab.words(), ds.vocab.words());
  EXPECT_TRUE(same(back.split.train, ds.split.train));
  EXPECT_TRUE(same(back.split.validation, ds.split.validation));
  EXPECT_TRUE(same(back.split.test, ds.split.test));
  EXPECT_EQ(back.split.user_ids, ds.split.user_ids);
  EXPECT_EQ(back.bank.users.tokens, ds.bank.users.tokens);
  EXPECT_EQ(back.bank.items.lengths, ds.bank.items.lengths);
  EXPECT_EQ(back.bank.items.src_record, ds.bank.items.src_record);
  EXPECT_EQ(back.corpus.records.size(), ds.corpus.records.size());
  EXPECT_EQ(back.corpus.records[3].offsets, ds.corpus.records[3].offsets);
  EXPECT_EQ(back.stats.ratings, ds.stats.ratings);
}

TEST(Dataset, PrepareFromJsonl) {
  TempDir tmp;
  write_file(tmp / "r.jsonl", carp::testing::to_jsonl(carp::testing::synthetic_corpus(15, 12, 6, 9)));
  PrepareOptions opt;
  opt.preprocess.vocab_size = 100;
  const auto ds = prepare_dataset(tmp / "r.jsonl", opt);
  EXPECT_EQ(ds.stats.ratings, 90u);
  EXPECT_EQ(ds.split.num_users(), 15u);
}
