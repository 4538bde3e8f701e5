#pragma once
// Prepared dataset directory: vocabulary, split files, document bank and the
// preprocessed records (kept for explanation reports).
//
//   DIR/dataset.json     metadata (pi, C, seed, cap, vocab hash, stats)
//   DIR/vocab.tsv        word <TAB> index, one per line
//   DIR/users.tsv        index <TAB> user id
//   DIR/items.tsv        index <TAB> item id
//   DIR/split.csv        user_index,item_index,rating,label,split
//   DIR/documents.json   manifest of the arrays in documents.bin
//   DIR/documents.bin    little-endian int32 arrays
//   DIR/records.jsonl    preprocessed records (text, tokens, offsets)

#include "carp/array_io.hpp"
#include "carp/corpus.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace carp {

struct Dataset {
  Vocabulary vocab;
  SplitCorpus split;
  DocumentBank bank;
  ReviewCorpus corpus;  // preprocessed records; Interaction::record indexes this
  double max_rating = 5.0;
  std::uint64_t seed = 0;
  StatsReport stats;
};

namespace detail {

inline void write_tsv_ids(const std::filesystem::path& p, const std::vector<std::string>& ids) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw Error("cannot write " + p.string());
  for (std::size_t i = 0; i < ids.size(); ++i) out << i << '\t' << ids[i] << '\n';
}

inline std::vector<std::string> read_tsv_ids(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("cannot read " + p.string());
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw Error(p.string() + ": malformed line '" + line + "'");
    if (std::stoul(line.substr(0, tab)) != ids.size()) throw Error(p.string() + ": indices not dense");
    ids.push_back(line.substr(tab + 1));
  }
  return ids;
}

}  // namespace detail

inline void save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  {
    std::ofstream out(dir / "vocab.tsv", std::ios::trunc);
    for (std::size_t i = 0; i < ds.vocab.size(); ++i) out << ds.vocab.words()[i] << '\t' << i << '\n';
  }
  detail::write_tsv_ids(dir / "users.tsv", ds.split.user_ids);
  detail::write_tsv_ids(dir / "items.tsv", ds.split.item_ids);

  {
    std::ofstream out(dir / "split.csv", std::ios::trunc);
    out << "user_index,item_index,rating,label,split,record\n";
    std::vector<std::pair<const Interaction*, SplitPart>> all;
    for (const auto& x : ds.split.train) all.push_back({&x, SplitPart::kTrain});
    for (const auto& x : ds.split.validation) all.push_back({&x, SplitPart::kValidation});
    for (const auto& x : ds.split.test) all.push_back({&x, SplitPart::kTest});
    std::sort(all.begin(), all.end(), [](auto& a, auto& b) { return a.first->record < b.first->record; });
    for (auto [x, p] : all)
      out << x->user << ',' << x->item << ',' << x->rating << ',' << to_string(x->label) << ',' << to_string(p)
          << ',' << x->record << '\n';
  }

  {
    nlohmann::json manifest;
    manifest["file"] = "documents.bin";
    manifest["dtype"] = "int32";
    manifest["cap"] = ds.bank.cap();
    std::ofstream bin(dir / "documents.bin", std::ios::binary | std::ios::trunc);
    std::size_t offset = 0;
    auto put = [&](const std::string& name, const std::vector<std::int32_t>& v, std::vector<std::size_t> shape) {
      bin.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * 4));
      manifest["arrays"][name] = {{"shape", shape}, {"offset", offset}};
      offset += v.size() * 4;
    };
    const std::size_t cap = ds.bank.cap();
    for (auto [side, set] : {std::pair{"user", &ds.bank.users}, std::pair{"item", &ds.bank.items}}) {
      const std::string s = side;
      put(s + "_tokens", set->tokens, {set->count(), cap});
      put(s + "_lengths", set->lengths, {set->count()});
      put(s + "_src_record", set->src_record, {set->count(), cap});
      put(s + "_src_token", set->src_token, {set->count(), cap});
    }
    if (!bin) throw Error("cannot write documents.bin");
    io::write_json(dir / "documents.json", manifest);
  }

  {
    std::ofstream out(dir / "records.jsonl", std::ios::trunc);
    for (const auto& r : ds.corpus.records) {
      nlohmann::json j;
      j["user_id"] = r.user_id;
      j["item_id"] = r.item_id;
      j["rating"] = r.rating;
      j["text"] = r.text;
      if (r.timestamp) j["timestamp"] = *r.timestamp;
      j["tokens"] = r.tokens;
      j["offsets"] = r.offsets;
      out << j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
    }
  }

  nlohmann::json meta;
  meta["pi"] = ds.split.pi;
  meta["max_rating"] = ds.max_rating;
  meta["seed"] = ds.seed;
  meta["doc_cap"] = ds.bank.cap();
  meta["vocab_size"] = ds.vocab.size();
  meta["vocab_hash"] = std::to_string(ds.vocab.hash());
  meta["users"] = ds.split.num_users();
  meta["items"] = ds.split.num_items();
  meta["stats"] = to_json(ds.stats);
  io::write_json(dir / "dataset.json", meta);
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  const auto meta = io::read_json(dir / "dataset.json");
  ds.split.pi = meta.at("pi").get<double>();
  ds.max_rating = meta.at("max_rating").get<double>();
  ds.seed = meta.at("seed").get<std::uint64_t>();

  {
    std::ifstream in(dir / "vocab.tsv");
    if (!in) throw Error("cannot read " + (dir / "vocab.tsv").string());
    std::vector<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
      const auto tab = line.rfind('\t');
      if (tab == std::string::npos || std::stoul(line.substr(tab + 1)) != words.size())
        throw Error("vocab.tsv: malformed or non-dense line '" + line + "'");
      words.push_back(line.substr(0, tab));
    }
    ds.vocab = Vocabulary(std::move(words));
  }
  if (std::to_string(ds.vocab.hash()) != meta.at("vocab_hash").get<std::string>())
    throw Error("vocab.tsv does not match dataset.json vocabulary hash");

  ds.split.user_ids = detail::read_tsv_ids(dir / "users.tsv");
  ds.split.item_ids = detail::read_tsv_ids(dir / "items.tsv");

  {
    const auto rows = detail::parse_csv(io::read_text(dir / "split.csv"));
    for (std::size_t k = 1; k < rows.size(); ++k) {
      const auto& f = rows[k].fields;
      if (f.size() == 1 && f[0].empty()) continue;
      if (f.size() != 6) throw Error("split.csv: malformed row " + std::to_string(k));
      Interaction x;
      x.user = std::stoi(f[0]);
      x.item = std::stoi(f[1]);
      x.rating = std::stof(f[2]);
      x.label = f[3] == "pos" ? Sentiment::kPos : Sentiment::kNeg;
      x.record = std::stoul(f[5]);
      if (f[4] == "train")
        ds.split.train.push_back(x);
      else if (f[4] == "validation")
        ds.split.validation.push_back(x);
      else
        ds.split.test.push_back(x);
    }
  }

  {
    const auto manifest = io::read_json(dir / "documents.json");
    const std::string blob = io::read_text(dir / manifest.at("file").get<std::string>());
    const std::size_t cap = manifest.at("cap").get<std::size_t>();
    auto get = [&](const std::string& name) {
      const auto& a = manifest.at("arrays").at(name);
      std::size_t n = 1;
      for (auto d : a.at("shape")) n *= d.get<std::size_t>();
      const auto off = a.at("offset").get<std::size_t>();
      if (off + n * 4 > blob.size()) throw Error("documents.bin is truncated");
      std::vector<std::int32_t> v(n);
      std::memcpy(v.data(), blob.data() + off, n * 4);
      return v;
    };
    for (auto [side, set] : {std::pair{"user", &ds.bank.users}, std::pair{"item", &ds.bank.items}}) {
      const std::string s = side;
      set->cap = cap;
      set->tokens = get(s + "_tokens");
      set->lengths = get(s + "_lengths");
      set->src_record = get(s + "_src_record");
      set->src_token = get(s + "_src_token");
    }
  }

  {
    std::ifstream in(dir / "records.jsonl");
    if (!in) throw Error("cannot read records.jsonl");
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      ReviewRecord r;
      r.user_id = j.at("user_id").get<std::string>();
      r.item_id = j.at("item_id").get<std::string>();
      r.rating = j.at("rating").get<double>();
      r.text = j.at("text").get<std::string>();
      if (j.contains("timestamp")) r.timestamp = j["timestamp"].get<std::int64_t>();
      r.tokens = j.at("tokens").get<std::vector<TokenId>>();
      r.offsets = j.at("offsets").get<std::vector<std::uint32_t>>();
      ds.corpus.records.push_back(std::move(r));
    }
  }
  ds.stats = corpus_stats(ds.split, ds.bank, ds.corpus);
  return ds;
}

/// Full `prepare` pipeline: load -> preprocess -> split -> documents -> stats.
struct PrepareOptions {
  InputFormat format = InputFormat::kAmazonJsonl;
  LoadOptions load;
  PreprocessConfig preprocess;
  SplitConfig split;
  std::uint64_t seed = 1;
};

inline Dataset prepare_dataset(const std::filesystem::path& input, const PrepareOptions& opt) {
  Dataset ds;
  auto raw = load_reviews(input, opt.format, opt.load);
  auto [corpus, vocab] = preprocess(raw, opt.preprocess);
  ds.corpus = std::move(corpus);
  ds.vocab = std::move(vocab);
  ds.split = split(ds.corpus, opt.seed, opt.split);
  ds.bank = build_documents(ds.split, ds.corpus, opt.preprocess.doc_cap);
  ds.max_rating = opt.load.max_rating;
  ds.seed = opt.seed;
  ds.stats = corpus_stats(ds.split, ds.bank, ds.corpus);
  return ds;
}

}  // namespace carp
