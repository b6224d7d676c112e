#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace stacktag {

// Single global precision choice; every matrix, activation and gradient in the
// library runs in 64-bit.
using Scalar = double;
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using Index = Eigen::Index;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Operand shapes disagree.
struct DimError : Error {
  using Error::Error;
};
// Invalid configuration (unknown key, missing gate weights, ...).
struct ConfigError : Error {
  using Error::Error;
};
// Malformed files or corpus data.
struct DataError : Error {
  using Error::Error;
};

std::string shape_str(Index rows, Index cols);

// Seedable deterministic generator: mt19937_64 (bit-exact per the standard)
// with hand-rolled output transforms, so the draw sequence is identical
// across platforms and library versions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  // Uniform in [0, 1), 53-bit resolution.
  Scalar uniform() { return static_cast<Scalar>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
  std::uint64_t uniform_int(std::uint64_t n);

  // Standard normal draw, Marsaglia polar method with cached spare.
  Scalar gaussian();

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  Scalar spare_ = 0;
};

namespace detail {
// Stable logistic; saturates to {0, 1} instead of overflowing.
inline Scalar sigm1(Scalar v) {
  if (v >= 0) {
    const Scalar z = std::exp(-v);
    return 1 / (1 + z);
  }
  const Scalar z = std::exp(v);
  return z / (1 + z);
}
}  // namespace detail

// Elementwise activations. The *_d companions take the already-activated
// value: sigm_d(y) = y(1-y), tanh_d(y) = 1-y^2.
template <typename D>
typename D::PlainObject sigm(const Eigen::MatrixBase<D>& x) {
  return x.unaryExpr([](Scalar v) { return detail::sigm1(v); });
}

template <typename D>
typename D::PlainObject tanh_m(const Eigen::MatrixBase<D>& x) {
  return x.unaryExpr([](Scalar v) { return std::tanh(v); });
}

template <typename D>
typename D::PlainObject sigm_d(const Eigen::MatrixBase<D>& y) {
  return y.unaryExpr([](Scalar v) { return v * (1 - v); });
}

template <typename D>
typename D::PlainObject tanh_d(const Eigen::MatrixBase<D>& y) {
  return y.unaryExpr([](Scalar v) { return 1 - v * v; });
}

// Checked matrix product.
Mat matmul(const Mat& a, const Mat& b);

// Softmax over a column vector, max-subtracted so huge logits cannot overflow.
Vec softmax(const Vec& x);

// Orthonormal factor of a random Gaussian matrix via SVD: U when rows >= cols,
// V^T otherwise, so the result satisfies Q^T Q = I (or Q Q^T = I) either way.
Mat orthogonal_init(Index rows, Index cols, Rng& rng);

// What the fan-in expression parameterizes in N(0, 1/sqrt(fan_in)).
enum class GaussianSpread { Variance, Stddev };

// Entries i.i.d. 0.1 * N(0, 1/sqrt(fan_in)); the second argument of the
// normal is read as variance by default (switchable).
Mat gaussian_init(Index rows, Index cols, Index fan_in, Rng& rng,
                  GaussianSpread spread = GaussianSpread::Variance);

// Binary keep mask: entries are 0 with probability drop_rate, 1 otherwise.
Vec bernoulli_mask(Index n, Scalar drop_rate, Rng& rng);

// Central-difference check of analytic gradients against loss(). For every
// parameter entry compares (L(t+eps) - L(t-eps)) / 2eps with the analytic
// value and returns the max of |a-n| / max(|a|, |n|, 1e-8). loss() must be a
// deterministic function of the parameter values (dropout disabled).
Scalar grad_check(const std::function<Scalar()>& loss,
                  const std::vector<Mat*>& params,
                  const std::vector<const Mat*>& analytic_grads,
                  Scalar eps = 1e-5);

}  // namespace stacktag
