#pragma once
// Test-set MSE, multi-run aggregation and Student's t-test.

#include "carp/checkpoint.hpp"
#include "carp/dataset.hpp"
#include "carp/trainer.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

namespace carp {

struct TTest {
  double t = 0;
  double p_value = 1;
  double dof = 0;
};

/// Two-sided unpaired Student's t-test with pooled variance.
inline TTest student_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2) throw Error("t-test needs at least two runs per group");
  auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
  auto ss = [](const std::vector<double>& v, double m) {
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return s;
  };
  const double ma = mean(a), mb = mean(b);
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  TTest r;
  r.dof = na + nb - 2;
  const double pooled = (ss(a, ma) + ss(b, mb)) / r.dof;
  const double se = std::sqrt(pooled * (1 / na + 1 / nb));
  if (ma == mb) return {0.0, 1.0, r.dof};
  if (se == 0) return {ma > mb ? INFINITY : -INFINITY, 0.0, r.dof};
  r.t = (ma - mb) / se;
  boost::math::students_t dist(r.dof);
  r.p_value = 2 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t)));
  return r;
}

struct MetricsReport {
  std::vector<std::string> runs;
  std::vector<double> mse;
  double mean = 0, std = 0;  // std is the sample standard deviation (n-1)
  std::optional<TTest> comparison;
  std::optional<double> comparison_mean;
};

inline MetricsReport summarize(std::vector<std::string> runs, std::vector<double> mse) {
  MetricsReport m;
  m.runs = std::move(runs);
  m.mse = std::move(mse);
  if (m.mse.empty()) return m;
  m.mean = std::accumulate(m.mse.begin(), m.mse.end(), 0.0) / m.mse.size();
  if (m.mse.size() > 1) {
    double s = 0;
    for (double x : m.mse) s += (x - m.mean) * (x - m.mean);
    m.std = std::sqrt(s / (m.mse.size() - 1));
  }
  return m;
}

inline nlohmann::json to_json(const MetricsReport& m) {
  nlohmann::json j;
  for (std::size_t i = 0; i < m.mse.size(); ++i) j["runs"].push_back({{"run", m.runs[i]}, {"test_mse", m.mse[i]}});
  j["mean"] = m.mean;
  j["std"] = m.std;
  j["count"] = m.mse.size();
  if (m.comparison) {
    j["comparison"] = {{"mean", *m.comparison_mean}, {"t", m.comparison->t}, {"p_value", m.comparison->p_value},
                       {"dof", m.comparison->dof}};
  }
  return j;
}

/// Test MSE of one checkpoint against a prepared dataset.
inline double evaluate(const Checkpoint& ck, const Dataset& ds) {
  if (ck.vocab_hash != ds.vocab.hash()) throw Error("checkpoint vocabulary does not match the dataset");
  return evaluate_mse(ck.params, ck.model, ds.bank, ds.split.test);
}

}  // namespace carp
