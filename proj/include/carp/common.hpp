#pragma once
// Shared numeric types and small helpers used across the CARP headers.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace carp {

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

using TokenId = std::int32_t;

inline constexpr TokenId kPadToken = 0;
inline constexpr TokenId kOovToken = 1;

/// Unrecoverable input or usage error (bad file, mismatched checkpoint, ...).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Contract violation inside the library (shape mismatch, out-of-range index).
class AssertionError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

#define CARP_ASSERT(cond, msg)                                              \
  do {                                                                      \
    if (!(cond)) throw ::carp::AssertionError(std::string("assertion `") + \
                                              #cond + "` failed: " + (msg)); \
  } while (0)

enum class Sentiment : int { kPos = 0, kNeg = 1 };
inline constexpr int kNumSentiments = 2;

inline const char* to_string(Sentiment s) { return s == Sentiment::kPos ? "pos" : "neg"; }

template <class T>
inline T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

/// Numerically stable log-softmax of a vector.
template <class Derived>
auto log_softmax(const Eigen::MatrixBase<Derived>& x) {
  using T = typename Derived::Scalar;
  const T mx = x.maxCoeff();
  const T lse = mx + std::log((x.array() - mx).exp().sum());
  return (x.array() - lse).matrix().eval();
}

template <class Derived>
auto softmax(const Eigen::MatrixBase<Derived>& x) {
  using T = typename Derived::Scalar;
  const T mx = x.maxCoeff();
  auto e = (x.array() - mx).exp().eval();
  return (e / e.sum()).matrix().eval();
}

}  // namespace carp
