#pragma once
// Mini-batch RMSprop training with validation-based early stopping.

#include "carp/checkpoint.hpp"
#include "carp/dataset.hpp"
#include "carp/rmsprop.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>

namespace carp {

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t batch_size = 100;
  int max_epochs = 30;
  int patience = 5;
  std::uint64_t seed = 1;
  double rms_decay = 0.9;
  double rms_epsilon = 1e-8;
  LossConfig loss;
  // Architecture hyperparameters (vocabulary/user/item counts come from data).
  int embed_dim = 300, filters = 50, window = 3, latent_dim = 25, slots = 5, routing_iters = 3;
  RoutingKind routing = RoutingKind::kBiAgreement;
  double keep_prob = 0.9;
  std::string data_dir;  // prepared dataset directory; recorded for later explain calls

  ModelConfig model_config(const Dataset& ds) const {
    ModelConfig m;
    m.vocab_size = ds.vocab.size();
    m.num_users = ds.split.num_users();
    m.num_items = ds.split.num_items();
    m.embed_dim = embed_dim;
    m.filters = filters;
    m.window = window;
    m.latent_dim = latent_dim;
    m.slots = slots;
    m.routing_iters = routing_iters;
    m.routing = routing;
    m.keep_prob = keep_prob;
    m.max_rating = ds.max_rating;
    return m;
  }

  void validate() const {
    if (learning_rate <= 0 || batch_size == 0 || max_epochs < 1 || patience < 1)
      throw Error("learning rate, batch size, epochs and patience must be positive");
    if (loss.lambda < 0 || loss.lambda > 1) throw Error("lambda must lie in [0, 1]");
    if (loss.epsilon <= 0 || loss.epsilon >= 1) throw Error("epsilon must lie in (0, 1)");
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j = {{"lr", c.learning_rate},     {"batch_size", c.batch_size},  {"epochs", c.max_epochs},
          {"patience", c.patience},    {"seed", c.seed},              {"rms_decay", c.rms_decay},
          {"rms_epsilon", c.rms_epsilon}, {"lambda", c.loss.lambda},  {"epsilon", c.loss.epsilon},
          {"mutual_exclusion", c.loss.mutual_exclusion},              {"d", c.embed_dim},
          {"n", c.filters},            {"c", c.window},               {"k", c.latent_dim},
          {"M", c.slots},              {"tau", c.routing_iters},      {"routing", to_string(c.routing)},
          {"keep_prob", c.keep_prob}};
  if (!c.data_dir.empty()) j["data"] = c.data_dir;
  return j;
}

/// Overlays the fields present in `j` onto `c`; unknown keys are rejected.
inline void apply_json(TrainConfig& c, const nlohmann::json& j) {
  for (const auto& [key, v] : j.items()) {
    if (key == "lr") c.learning_rate = v.get<double>();
    else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
    else if (key == "epochs") c.max_epochs = v.get<int>();
    else if (key == "patience") c.patience = v.get<int>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else if (key == "rms_decay") c.rms_decay = v.get<double>();
    else if (key == "rms_epsilon") c.rms_epsilon = v.get<double>();
    else if (key == "lambda") c.loss.lambda = v.get<double>();
    else if (key == "epsilon") c.loss.epsilon = v.get<double>();
    else if (key == "mutual_exclusion") c.loss.mutual_exclusion = v.get<bool>();
    else if (key == "d") c.embed_dim = v.get<int>();
    else if (key == "n") c.filters = v.get<int>();
    else if (key == "c") c.window = v.get<int>();
    else if (key == "k") c.latent_dim = v.get<int>();
    else if (key == "M") c.slots = v.get<int>();
    else if (key == "tau") c.routing_iters = v.get<int>();
    else if (key == "routing") c.routing = parse_routing(v.get<std::string>());
    else if (key == "keep_prob") c.keep_prob = v.get<double>();
    else if (key == "data") c.data_dir = v.get<std::string>();
    else throw Error("unknown training config key '" + key + "'");
  }
}

struct EpochLog {
  int epoch = 0;
  double train_loss = 0, l_sqr = 0, l_stm = 0, val_mse = 0, seconds = 0;
};

struct TrainResult {
  Checkpoint best;
  std::vector<EpochLog> history;
};

/// Mean squared error of unclipped predictions, no dropout.
inline double evaluate_mse(const ModelParams<float>& p, const ModelConfig& cfg, const DocumentBank& bank,
                           std::span<const Interaction> pairs, std::size_t chunk = 256) {
  if (pairs.empty()) throw Error("MSE over an empty set");
  double acc = 0;
  LossConfig lc;
  for (std::size_t i = 0; i < pairs.size(); i += chunk) {
    const auto part = pairs.subspan(i, std::min(chunk, pairs.size() - i));
    const auto r = run_batch<float>(p, cfg, bank, part, lc, nullptr, nullptr);
    acc += r.l_sqr * static_cast<double>(part.size());
  }
  return acc / static_cast<double>(pairs.size());
}

namespace detail {

inline void dump_nonfinite_batch(const std::filesystem::path& out, std::span<const Interaction> batch,
                                 const BatchResult<float>& r, int epoch, std::size_t step) {
  nlohmann::json j;
  j["epoch"] = epoch;
  j["step"] = step;
  j["loss"] = std::to_string(r.loss);
  for (std::size_t i = 0; i < batch.size(); ++i)
    j["pairs"].push_back({{"user", batch[i].user},
                          {"item", batch[i].item},
                          {"rating", batch[i].rating},
                          {"prediction", std::to_string(r.predictions[i])},
                          {"len_pos", std::to_string(r.lengths[i].pos)},
                          {"len_neg", std::to_string(r.lengths[i].neg)}});
  std::filesystem::create_directories(out);
  io::write_json(out / "nonfinite_batch.json", j);
}

}  // namespace detail

/// Trains on ds.split.train, selects the epoch with the best validation MSE
/// and stops after `patience` epochs without improvement. When `out_dir` is
/// set, writes train_log.csv and the best checkpoint there.
inline TrainResult train(const Dataset& ds, const TrainConfig& tc,
                         const std::optional<std::filesystem::path>& out_dir = std::nullopt) {
  tc.validate();
  if (ds.split.train.empty()) throw Error("training split is empty");
  const ModelConfig mc = tc.model_config(ds);
  mc.validate();

  std::mt19937_64 init_rng(tc.seed), shuffle_rng(tc.seed ^ 0x5bd1e995ull), dropout_rng(tc.seed ^ 0x9e3779b97f4a7c15ull);
  ModelParams<float> params = ModelParams<float>::initialize(mc, init_rng);
  ModelParams<float> grads = ModelParams<float>::zeros(mc);
  RmsProp<float> opt(mc, tc.learning_rate, tc.rms_decay, tc.rms_epsilon);

  std::ofstream log;
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    log.open(*out_dir / "train_log.csv", std::ios::trunc);
    log << "epoch,train_loss,L_sqr,L_stm,val_MSE,seconds\n";
  }
  const auto& val = ds.split.validation.empty() ? ds.split.train : ds.split.validation;

  TrainResult result;
  result.best.model = mc;
  result.best.train_config = to_json(tc);
  result.best.vocab_hash = ds.vocab.hash();
  result.best.validation_mse = std::numeric_limits<double>::infinity();
  int since_best = 0;
  std::vector<Interaction> order = ds.split.train;

  for (int epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    detail::fisher_yates(order, shuffle_rng);
    EpochLog el;
    el.epoch = epoch;
    std::size_t step = 0;
    for (std::size_t i = 0; i < order.size(); i += tc.batch_size, ++step) {
      const std::span<const Interaction> batch(order.data() + i, std::min(tc.batch_size, order.size() - i));
      grads.set_zero();
      const auto r = run_batch<float>(params, mc, ds.bank, batch, tc.loss, &grads, &dropout_rng);
      if (!std::isfinite(r.loss)) {
        if (out_dir) detail::dump_nonfinite_batch(*out_dir, batch, r, epoch, step);
        throw Error("non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(step));
      }
      opt.step(params, grads);
      const double w = static_cast<double>(batch.size());
      el.train_loss += r.loss * w;
      el.l_sqr += r.l_sqr * w;
      el.l_stm += r.l_stm * w;
    }
    const double n = static_cast<double>(order.size());
    el.train_loss /= n;
    el.l_sqr /= n;
    el.l_stm /= n;
    el.val_mse = evaluate_mse(params, mc, ds.bank, val);
    el.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(el);
    if (log) log << el.epoch << ',' << el.train_loss << ',' << el.l_sqr << ',' << el.l_stm << ',' << el.val_mse << ','
                 << el.seconds << '\n' << std::flush;
    spdlog::info("epoch {:>3}  loss {:.4f}  L_sqr {:.4f}  L_stm {:.4f}  val MSE {:.4f}  ({:.1f}s)", el.epoch,
                 el.train_loss, el.l_sqr, el.l_stm, el.val_mse, el.seconds);

    if (el.val_mse < result.best.validation_mse) {
      result.best.validation_mse = el.val_mse;
      result.best.epoch = epoch;
      result.best.params = params;
      since_best = 0;
    } else if (++since_best >= tc.patience) {
      spdlog::info("early stop after epoch {} (best epoch {})", epoch, result.best.epoch);
      break;
    }
  }
  if (out_dir) save_checkpoint(*out_dir / "checkpoint", result.best);
  return result;
}

}  // namespace carp
