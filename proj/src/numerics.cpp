#include "stacktag/numerics.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <limits>
#include <sstream>

namespace stacktag {

std::string shape_str(Index rows, Index cols) {
  std::ostringstream os;
  os << rows << "x" << cols;
  return os.str();
}

std::uint64_t Rng::uniform_int(std::uint64_t n) {
  if (n == 0) throw Error("uniform_int: n must be positive");
  const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
  // accept only the largest multiple-of-n prefix of the output range
  const std::uint64_t limit = max - max % n;
  std::uint64_t r = engine_();
  while (r >= limit) r = engine_();
  return r % n;
}

Scalar Rng::gaussian() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  Scalar u, v, s;
  do {
    u = 2 * uniform() - 1;
    v = 2 * uniform() - 1;
    s = u * u + v * v;
  } while (s >= 1 || s == 0);
  const Scalar k = std::sqrt(-2 * std::log(s) / s);
  spare_ = v * k;
  have_spare_ = true;
  return u * k;
}

Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols() != b.rows())
    throw DimError("matmul: inner dimensions differ, " +
                   shape_str(a.rows(), a.cols()) + " * " +
                   shape_str(b.rows(), b.cols()));
  return a * b;
}

Vec softmax(const Vec& x) {
  if (x.size() == 0) throw DimError("softmax: empty input");
  const Scalar m = x.maxCoeff();
  Vec e = (x.array() - m).exp();
  return e / e.sum();
}

Mat orthogonal_init(Index rows, Index cols, Rng& rng) {
  if (rows < 1 || cols < 1)
    throw DimError("orthogonal_init: invalid shape " + shape_str(rows, cols));
  constexpr int kMaxAttempts = 4;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Mat a(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) a(i, j) = rng.gaussian();
    Eigen::BDCSVD<Mat> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (svd.info() != Eigen::Success) continue;  // retry with a fresh draw
    if (rows >= cols) return svd.matrixU();
    return Mat(svd.matrixV().transpose());
  }
  throw Error("orthogonal_init: SVD did not converge after repeated draws");
}

Mat gaussian_init(Index rows, Index cols, Index fan_in, Rng& rng,
                  GaussianSpread spread) {
  if (rows < 1 || cols < 1)
    throw DimError("gaussian_init: invalid shape " + shape_str(rows, cols));
  if (fan_in < 1) throw DimError("gaussian_init: fan_in must be >= 1");
  const Scalar stddev = spread == GaussianSpread::Variance
                            ? std::pow(static_cast<Scalar>(fan_in), -0.25)
                            : std::pow(static_cast<Scalar>(fan_in), -0.5);
  Mat m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = 0.1 * stddev * rng.gaussian();
  return m;
}

Vec bernoulli_mask(Index n, Scalar drop_rate, Rng& rng) {
  Vec m(n);
  for (Index i = 0; i < n; ++i) m(i) = rng.uniform() < drop_rate ? 0.0 : 1.0;
  return m;
}

Scalar grad_check(const std::function<Scalar()>& loss,
                  const std::vector<Mat*>& params,
                  const std::vector<const Mat*>& analytic_grads, Scalar eps) {
  if (eps <= 0) throw Error("grad_check: eps must be positive");
  if (params.size() != analytic_grads.size())
    throw DimError("grad_check: parameter and gradient sets differ in length");
  Scalar worst = 0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Mat& p = *params[k];
    const Mat& g = *analytic_grads[k];
    if (p.rows() != g.rows() || p.cols() != g.cols())
      throw DimError("grad_check: gradient shape " + shape_str(g.rows(), g.cols()) +
                     " does not match parameter " + shape_str(p.rows(), p.cols()));
    for (Index i = 0; i < p.size(); ++i) {
      const Scalar saved = p.data()[i];
      p.data()[i] = saved + eps;
      const Scalar up = loss();
      p.data()[i] = saved - eps;
      const Scalar down = loss();
      p.data()[i] = saved;
      const Scalar numeric = (up - down) / (2 * eps);
      const Scalar analytic = g.data()[i];
      const Scalar rel = std::abs(analytic - numeric) /
                         std::max({std::abs(analytic), std::abs(numeric), Scalar(1e-8)});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace stacktag
