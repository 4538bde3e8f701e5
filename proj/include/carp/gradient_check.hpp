#pragma once
// Central finite-difference verification of run_batch() gradients.

#include "carp/model.hpp"

#include <functional>
#include <string>
#include <vector>

namespace carp {

struct GroupGradientError {
  std::string name;
  double relative_error = 0;  // |analytic - numeric|_2 / max(|analytic|_2, |numeric|_2)
  double analytic_norm = 0;
  double numeric_norm = 0;
};

struct GradientCheckReport {
  std::vector<GroupGradientError> groups;
  double worst = 0;
  std::string worst_group;
};

/// Compares analytic gradients of the total loss with central differences
/// (step `h`) for every parameter array accepted by `select` (all by
/// default). Dropout is disabled. The padding embedding row is frozen and is
/// skipped.
inline GradientCheckReport gradient_check(const ModelParams<double>& params, const ModelConfig& cfg,
                                          const DocumentBank& bank, std::span<const Interaction> batch,
                                          const LossConfig& loss, double h = 1e-5,
                                          const std::function<bool(const std::string&)>& select = {}) {
  ModelParams<double> grads = ModelParams<double>::zeros(cfg);
  run_batch<double>(params, cfg, bank, batch, loss, &grads, nullptr);

  ModelParams<double> probe = params;
  auto objective = [&] { return run_batch<double>(probe, cfg, bank, batch, loss, nullptr, nullptr).loss; };

  std::vector<const Matrix<double>*> analytic;
  grads.visit([&](const std::string&, const Matrix<double>& g) { analytic.push_back(&g); });

  GradientCheckReport rep;
  std::size_t idx = 0;
  probe.visit([&](const std::string& name, Matrix<double>& p) {
    const Matrix<double>& a = *analytic[idx++];
    if (select && !select(name)) return;
    Matrix<double> numeric = Matrix<double>::Zero(p.rows(), p.cols());
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      if (name == "embedding" && r == kPadToken) continue;
      for (Eigen::Index c = 0; c < p.cols(); ++c) {
        const double orig = p(r, c);
        p(r, c) = orig + h;
        const double up = objective();
        p(r, c) = orig - h;
        const double down = objective();
        p(r, c) = orig;
        numeric(r, c) = (up - down) / (2 * h);
      }
    }
    GroupGradientError e;
    e.name = name;
    e.analytic_norm = a.norm();
    e.numeric_norm = numeric.norm();
    const double denom = std::max(e.analytic_norm, e.numeric_norm);
    e.relative_error = denom > 0 ? (a - numeric).norm() / denom : 0.0;
    if (e.relative_error >= rep.worst) {
      rep.worst = e.relative_error;
      rep.worst_group = name;
    }
    rep.groups.push_back(e);
  });
  return rep;
}

}  // namespace carp
