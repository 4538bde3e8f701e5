// Command-line front end: prepare, train, eval, explain, ratio-report, sweep.

#include "carp/carp.hpp"

#include <CLI11.hpp>
#include <glob.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

std::vector<fs::path> expand_glob(const std::string& pattern) {
  glob_t g{};
  std::vector<fs::path> out;
  if (::glob(pattern.c_str(), 0, nullptr, &g) == 0)
    for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
  globfree(&g);
  return out;
}

// A run directory either is a checkpoint or holds one under checkpoint/.
fs::path checkpoint_dir(const fs::path& run) {
  if (fs::exists(run / "manifest.json")) return run;
  return run / "checkpoint";
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

carp::MetricsReport evaluate_runs(const std::vector<fs::path>& runs, const carp::Dataset& ds) {
  std::vector<std::string> names;
  std::vector<double> mse;
  for (const auto& r : runs) {
    const auto ck = carp::load_checkpoint(checkpoint_dir(r), ds.vocab.hash());
    names.push_back(r.string());
    mse.push_back(carp::evaluate(ck, ds));
    spdlog::info("{}: test MSE {:.4f}", r.string(), mse.back());
  }
  return carp::summarize(names, mse);
}

struct TrainOverrides {
  std::optional<double> lr, lambda, epsilon, keep_prob;
  std::optional<std::size_t> batch_size;
  std::optional<int> epochs, patience, d, n, c, k, m, tau;
  std::optional<std::string> routing;
  bool no_mutual_exclusion = false;

  void add_to(CLI::App* app) {
    app->add_option("--lr", lr, "learning rate");
    app->add_option("--lambda", lambda, "rating-loss weight");
    app->add_option("--epsilon", epsilon, "margin");
    app->add_option("--keep-prob", keep_prob, "dropout keep probability");
    app->add_option("--batch-size", batch_size);
    app->add_option("--epochs", epochs, "maximum epochs");
    app->add_option("--patience", patience);
    app->add_option("--d", d, "embedding size");
    app->add_option("--n", n, "conv filters");
    app->add_option("--c", c, "window size");
    app->add_option("--k", k, "latent size");
    app->add_option("--M", m, "viewpoints/aspects per document");
    app->add_option("--tau", tau, "routing iterations");
    app->add_option("--routing", routing, "rbia or ra");
    app->add_flag("--no-mutual-exclusion", no_mutual_exclusion);
  }

  void apply(carp::TrainConfig& tc) const {
    if (lr) tc.learning_rate = *lr;
    if (lambda) tc.loss.lambda = *lambda;
    if (epsilon) tc.loss.epsilon = *epsilon;
    if (keep_prob) tc.keep_prob = *keep_prob;
    if (batch_size) tc.batch_size = *batch_size;
    if (epochs) tc.max_epochs = *epochs;
    if (patience) tc.patience = *patience;
    if (d) tc.embed_dim = *d;
    if (n) tc.filters = *n;
    if (c) tc.window = *c;
    if (k) tc.latent_dim = *k;
    if (m) tc.slots = *m;
    if (tau) tc.routing_iters = *tau;
    if (routing) tc.routing = carp::parse_routing(*routing);
    if (no_mutual_exclusion) tc.loss.mutual_exclusion = false;
  }
};

carp::TrainConfig load_train_config(const std::string& config_path) {
  carp::TrainConfig tc;
  if (!config_path.empty()) carp::apply_json(tc, carp::io::read_json(config_path));
  return tc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CARP review-based rating prediction"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose);

  // prepare
  auto* prep = app.add_subcommand("prepare", "load, preprocess, split and build documents");
  std::string prep_input, prep_format = "amazon-jsonl", prep_out;
  carp::PrepareOptions popt;
  bool keep_stopwords = false;
  prep->add_option("--input", prep_input)->required();
  prep->add_option("--format", prep_format, "amazon-jsonl or generic-csv");
  prep->add_option("--out", prep_out)->required();
  prep->add_option("--seed", popt.seed);
  prep->add_option("--vocab-size", popt.preprocess.vocab_size);
  prep->add_option("--doc-cap", popt.preprocess.doc_cap);
  prep->add_option("--max-df", popt.preprocess.max_doc_frequency);
  prep->add_flag("--keep-stopwords", keep_stopwords);
  prep->add_option("--pi", popt.split.pi, "ratings above pi are positive");
  prep->add_option("--C", popt.load.max_rating, "maximum rating");
  prep->add_option("--rating-scale", popt.load.rating_scale);
  prep->add_option("--rating-offset", popt.load.rating_offset);

  // train
  auto* tr = app.add_subcommand("train", "train a model and keep the best validation checkpoint");
  std::string tr_config, tr_out, tr_data;
  std::optional<std::uint64_t> tr_seed;
  TrainOverrides tr_over;
  tr->add_option("--config", tr_config, "JSON config file");
  tr->add_option("--seed", tr_seed);
  tr->add_option("--out", tr_out)->required();
  tr->add_option("--data", tr_data, "prepared dataset (overrides the config's \"data\")");
  tr_over.add_to(tr);

  // eval
  auto* ev = app.add_subcommand("eval", "test MSE over one or more runs");
  std::string ev_checkpoint, ev_data, ev_runs, ev_compare, ev_out;
  ev->add_option("--checkpoint", ev_checkpoint);
  ev->add_option("--data", ev_data)->required();
  ev->add_option("--runs", ev_runs, "glob of run directories");
  ev->add_option("--compare", ev_compare, "glob of baseline run directories for a t-test");
  ev->add_option("--out", ev_out, "write the JSON report here as well");

  // explain
  auto* ex = app.add_subcommand("explain", "explanation report for user-item pairs");
  std::string ex_checkpoint, ex_data, ex_user, ex_item, ex_json;
  std::size_t ex_topk = 30, ex_units = 3;
  bool ex_test_norm = false;
  ex->add_option("--checkpoint", ex_checkpoint)->required();
  ex->add_option("--data", ex_data, "prepared dataset (defaults to the one used for training)");
  ex->add_option("--user", ex_user)->required();
  ex->add_option("--item", ex_item)->required();
  ex->add_option("--topk", ex_topk);
  ex->add_option("--top-units", ex_units);
  ex->add_flag("--normalize-over-test", ex_test_norm, "max-normalize against the whole test set");
  ex->add_option("--json", ex_json, "write the JSON report to this file instead of stdout");

  // ratio-report
  auto* rr = app.add_subcommand("ratio-report", "mean c_pos/c_neg per rank over the test set");
  std::string rr_checkpoint, rr_data, rr_out;
  rr->add_option("--checkpoint", rr_checkpoint)->required();
  rr->add_option("--data", rr_data)->required();
  rr->add_option("--out", rr_out, "CSV path (stdout by default)");

  // sweep
  auto* sw = app.add_subcommand("sweep", "train and evaluate over a hyperparameter grid");
  std::string sw_param, sw_values, sw_config, sw_data, sw_out, sw_seeds = "1,2,3,4,5";
  TrainOverrides sw_over;
  sw->add_option("--param", sw_param)->required()->check(CLI::IsMember({"M", "tau", "lambda"}));
  sw->add_option("--values", sw_values)->required();
  sw->add_option("--config", sw_config);
  sw->add_option("--data", sw_data);
  sw->add_option("--out", sw_out)->required();
  sw->add_option("--seeds", sw_seeds);
  sw_over.add_to(sw);

  CLI11_PARSE(app, argc, argv);
  // Logs go to stderr; stdout carries reports only.
  spdlog::set_default_logger(spdlog::stderr_color_mt("carp"));
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (*prep) {
      popt.format = carp::parse_format(prep_format);
      popt.preprocess.remove_stopwords = !keep_stopwords;
      const auto ds = carp::prepare_dataset(prep_input, popt);
      carp::save_dataset(prep_out, ds);
      std::cout << carp::to_json(ds.stats).dump(2) << '\n';
      return 0;
    }

    if (*tr) {
      auto tc = load_train_config(tr_config);
      if (tr_seed) tc.seed = *tr_seed;
      if (!tr_data.empty()) tc.data_dir = tr_data;
      tr_over.apply(tc);
      if (tc.data_dir.empty()) throw carp::Error("no dataset: pass --data or set \"data\" in the config");
      tc.data_dir = fs::absolute(tc.data_dir).string();
      const auto ds = carp::load_dataset(tc.data_dir);
      const auto res = carp::train(ds, tc, fs::path(tr_out));
      std::cout << nlohmann::json{{"best_epoch", res.best.epoch},
                                  {"validation_mse", res.best.validation_mse},
                                  {"test_mse", carp::evaluate(res.best, ds)},
                                  {"checkpoint", (fs::path(tr_out) / "checkpoint").string()}}
                       .dump(2)
                << '\n';
      return 0;
    }

    if (*ev) {
      const auto ds = carp::load_dataset(ev_data);
      std::vector<fs::path> runs;
      if (!ev_checkpoint.empty()) runs.emplace_back(ev_checkpoint);
      if (!ev_runs.empty()) {
        auto more = expand_glob(ev_runs);
        if (more.empty()) throw carp::Error("no runs match " + ev_runs);
        runs.insert(runs.end(), more.begin(), more.end());
      }
      if (runs.empty()) throw carp::Error("pass --checkpoint or --runs");
      auto report = evaluate_runs(runs, ds);
      if (!ev_compare.empty()) {
        const auto base = evaluate_runs(expand_glob(ev_compare), ds);
        report.comparison = carp::student_t_test(report.mse, base.mse);
        report.comparison_mean = base.mean;
      }
      const auto j = carp::to_json(report);
      if (!ev_out.empty()) carp::io::write_json(ev_out, j);
      std::cout << j.dump(2) << '\n';
      return 0;
    }

    if (*ex) {
      const auto ck = carp::load_checkpoint(checkpoint_dir(ex_checkpoint));
      if (ex_data.empty()) ex_data = ck.train_config.value("data", std::string());
      if (ex_data.empty()) throw carp::Error("checkpoint does not record its dataset; pass --data");
      const auto ds = carp::load_dataset(ex_data);
      std::span<const carp::Interaction> pool;
      if (ex_test_norm) pool = ds.split.test;
      const auto reports = carp::explain(ck, ds, {{ex_user, ex_item}}, ex_topk, ex_units, pool);
      nlohmann::json j = nlohmann::json::array();
      for (const auto& r : reports) j.push_back(carp::to_json(r));
      if (!ex_json.empty()) {
        carp::io::write_json(ex_json, j);
      } else {
        std::cout << j.dump(2) << '\n';
      }
      for (const auto& r : reports) std::cout << carp::render_text(r);
      return 0;
    }

    if (*rr) {
      const auto ck = carp::load_checkpoint(checkpoint_dir(rr_checkpoint));
      const auto ds = carp::load_dataset(rr_data);
      const auto table = carp::ratio_report(ck, ds);
      std::ostringstream csv;
      csv << "rank,mean_ratio\n";
      for (std::size_t r = 0; r < table.size(); ++r) csv << r + 1 << ',' << table[r] << '\n';
      if (!rr_out.empty()) {
        std::ofstream(rr_out) << csv.str();
      } else {
        std::cout << csv.str();
      }
      return 0;
    }

    if (*sw) {
      auto base = load_train_config(sw_config);
      if (!sw_data.empty()) base.data_dir = sw_data;
      sw_over.apply(base);
      if (base.data_dir.empty()) throw carp::Error("no dataset: pass --data or set \"data\" in the config");
      base.data_dir = fs::absolute(base.data_dir).string();
      const auto ds = carp::load_dataset(base.data_dir);
      fs::create_directories(sw_out);
      std::ofstream csv(fs::path(sw_out) / "sweep.csv");
      csv << "param,value,seed,test_mse\n";
      nlohmann::json summary = nlohmann::json::array();
      for (const auto& value : split_list(sw_values)) {
        std::vector<std::string> names;
        std::vector<double> mse;
        for (const auto& seed : split_list(sw_seeds)) {
          auto tc = base;
          tc.seed = std::stoull(seed);
          if (sw_param == "M") tc.slots = std::stoi(value);
          else if (sw_param == "tau") tc.routing_iters = std::stoi(value);
          else tc.loss.lambda = std::stod(value);
          const fs::path dir = fs::path(sw_out) / (sw_param + "=" + value) / ("seed" + seed);
          const auto res = carp::train(ds, tc, dir);
          const double m = carp::evaluate(res.best, ds);
          csv << sw_param << ',' << value << ',' << seed << ',' << m << '\n' << std::flush;
          names.push_back(dir.string());
          mse.push_back(m);
        }
        auto j = carp::to_json(carp::summarize(names, mse));
        j["param"] = sw_param;
        j["value"] = value;
        summary.push_back(j);
      }
      carp::io::write_json(fs::path(sw_out) / "sweep.json", summary);
      std::cout << summary.dump(2) << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
