#pragma once

#include "carp/model.hpp"

namespace carp {

/// RMSprop without momentum: ms = ρ·ms + (1−ρ)·g², θ −= lr·g / (√ms + ε).
template <class T>
class RmsProp {
 public:
  RmsProp(const ModelConfig& cfg, double lr, double decay = 0.9, double eps = 1e-8)
      : mean_sq_(ModelParams<T>::zeros(cfg)), lr_(static_cast<T>(lr)), decay_(static_cast<T>(decay)),
        eps_(static_cast<T>(eps)) {}

  void step(ModelParams<T>& params, const ModelParams<T>& grads) {
    std::vector<Matrix<T>*> ms;
    mean_sq_.visit([&](const std::string&, Matrix<T>& m) { ms.push_back(&m); });
    std::vector<const Matrix<T>*> gs;
    grads.visit([&](const std::string&, const Matrix<T>& g) { gs.push_back(&g); });
    std::size_t i = 0;
    params.visit([&](const std::string&, Matrix<T>& p) {
      auto& m = *ms[i];
      const auto& g = *gs[i];
      ++i;
      m.array() = decay_ * m.array() + (T(1) - decay_) * g.array().square();
      p.array() -= lr_ * g.array() / (m.array().sqrt() + eps_);
    });
    params.embedding.row(kPadToken).setZero();
  }

 private:
  ModelParams<T> mean_sq_;
  T lr_, decay_, eps_;
};

}  // namespace carp
