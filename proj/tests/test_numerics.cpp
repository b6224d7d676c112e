#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stacktag/numerics.hpp"

#include "oracles.hpp"

#include <cmath>

using namespace stacktag;

namespace {

Mat random_mat(Index rows, Index cols, Rng& rng, Scalar scale = 1.0) {
  Mat m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = scale * rng.gaussian();
  return m;
}

Scalar max_rel(const Mat& a, const Mat& b) {
  Scalar worst = 0;
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) {
      const Scalar rel = std::abs(a(i, j) - b(i, j)) /
                         std::max({std::abs(a(i, j)), std::abs(b(i, j)), Scalar(1e-8)});
      worst = std::max(worst, rel);
    }
  return worst;
}

}  // namespace

TEST_CASE("rng determinism and ranges") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    const Scalar u = a.uniform();
    CHECK(u == b.uniform());
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  Rng c(42), d(42);
  for (int i = 0; i < 1000; ++i) CHECK(c.gaussian() == d.gaussian());
  CHECK_THROWS_AS(a.uniform_int(0), Error);
  for (int i = 0; i < 200; ++i) CHECK(a.uniform_int(7) < 7);
}

TEST_CASE("matmul identity and hand arithmetic") {
  Rng rng(1);
  const Mat m = random_mat(3, 3, rng);
  CHECK((matmul(Mat(Mat::Identity(3, 3)), m) - m).cwiseAbs().maxCoeff() == 0.0);

  Mat a(2, 2), b(2, 1);
  a << 1, 2, 3, 4;
  b << 1, 1;
  const Mat c = matmul(a, b);
  CHECK(c(0, 0) == 3.0);
  CHECK(c(1, 0) == 7.0);
}

TEST_CASE("matmul matches the scalar triple-loop oracle") {
  Rng rng(7);
  const Mat a = random_mat(7, 5, rng);
  const Mat b = random_mat(5, 2, rng);
  const Mat c = matmul(a, b);
  const oracle::Grid ref = oracle::matmul(oracle::to_grid(a), oracle::to_grid(b));
  for (Index i = 0; i < c.rows(); ++i)
    for (Index j = 0; j < c.cols(); ++j) {
      const Scalar rel = std::abs(c(i, j) - ref[i][j]) /
                         std::max({std::abs(c(i, j)), std::abs(ref[i][j]), Scalar(1e-8)});
      CHECK(rel <= 1e-12);
    }
}

TEST_CASE("matmul rejects mismatched shapes naming both") {
  const Mat a = Mat::Zero(2, 3);
  const Mat b = Mat::Zero(4, 2);
  CHECK_THROWS_WITH_AS(matmul(a, b),
                       "matmul: inner dimensions differ, 2x3 * 4x2", DimError);
}

TEST_CASE("matmul associativity on random triples") {
  Rng rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const Index p = 2 + rng.uniform_int(5), q = 2 + rng.uniform_int(5),
                r = 2 + rng.uniform_int(5), s = 2 + rng.uniform_int(5);
    const Mat a = random_mat(p, q, rng), b = random_mat(q, r, rng),
              c = random_mat(r, s, rng);
    CHECK(max_rel(matmul(matmul(a, b), c), matmul(a, matmul(b, c))) < 1e-9);
  }
}

TEST_CASE("activations at fixed points and saturation") {
  Vec z = Vec::Zero(1);
  CHECK(sigm(z)(0) == 0.5);
  CHECK(tanh_m(z)(0) == 0.0);

  Vec big = Vec::Constant(1, 500.0);
  const Scalar s = sigm(big)(0);
  CHECK(s > 0.0);
  CHECK(s <= 1.0);
  CHECK(std::isfinite(s));
  Vec neg = Vec::Constant(1, -800.0);
  CHECK(std::isfinite(sigm(neg)(0)));
  CHECK(std::isfinite(tanh_m(Vec(Vec::Constant(1, 1e6)))(0)));

  // derivative forms take the activated value
  Vec y = Vec::Constant(1, 0.3);
  CHECK(sigm_d(y)(0) == doctest::Approx(0.3 * 0.7).epsilon(1e-15));
  CHECK(tanh_d(y)(0) == doctest::Approx(1 - 0.09).epsilon(1e-15));
}

TEST_CASE("softmax analytic values and overflow safety") {
  Vec two = Vec::Zero(2);
  const Vec u = softmax(two);
  CHECK(u(0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(u(1) == doctest::Approx(0.5).epsilon(1e-15));

  Vec ln2(2);
  ln2 << std::log(2.0), 0.0;
  const Vec v = softmax(ln2);
  CHECK(std::abs(v(0) - 2.0 / 3.0) < 1e-12);
  CHECK(std::abs(v(1) - 1.0 / 3.0) < 1e-12);

  Vec huge(2);
  huge << 1000.0, 0.0;
  const Vec w = softmax(huge);
  CHECK(std::abs(w(0) - 1.0) < 1e-12);
  CHECK(std::abs(w(1) - 0.0) < 1e-12);
  CHECK(std::isfinite(w(0)));

  CHECK_THROWS_AS(softmax(Vec()), DimError);
}

TEST_CASE("softmax sums to one and is translation invariant") {
  Rng rng(11);
  for (int rep = 0; rep < 50; ++rep) {
    const Index n = 1 + rng.uniform_int(12);
    Vec x(n);
    for (Index i = 0; i < n; ++i) x(i) = 20 * rng.gaussian();
    const Vec y = softmax(x);
    CHECK(std::abs(y.sum() - 1.0) <= 1e-12);
    CHECK(y.minCoeff() >= 0.0);
    const Scalar c = 5 * rng.gaussian();
    const Vec shifted = softmax(Vec(x.array() + c));
    CHECK((y - shifted).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("orthogonal_init produces orthonormal factors") {
  Rng rng(5);
  const Mat sq = orthogonal_init(4, 4, rng);
  CHECK((sq.transpose() * sq - Mat::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-6);

  const Mat tall = orthogonal_init(8, 4, rng);
  CHECK((tall.transpose() * tall - Mat::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-6);

  const Mat wide = orthogonal_init(4, 8, rng);
  CHECK((wide * wide.transpose() - Mat::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-6);

  Rng r1(9), r2(9);
  const Mat a = orthogonal_init(6, 3, r1);
  const Mat b = orthogonal_init(6, 3, r2);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);  // bitwise-identical

  CHECK_THROWS_AS(orthogonal_init(0, 3, rng), DimError);
}

TEST_CASE("gaussian_init spread matches the variance reading") {
  auto sample_stddev = [](const Mat& m) {
    const Scalar mean = m.mean();
    return std::sqrt((m.array() - mean).square().sum() / (m.size() - 1));
  };

  Rng rng(17);
  // variance reading: stddev = 0.1 * (1/sqrt(fan_in))^(1/2)
  const Mat a = gaussian_init(1000, 1000, 100, rng);
  const Scalar expected100 = 0.1 * std::sqrt(1.0 / std::sqrt(100.0));
  CHECK(std::abs(sample_stddev(a) - expected100) / expected100 < 0.02);

  const Mat b = gaussian_init(1000, 1000, 1, rng);
  CHECK(std::abs(sample_stddev(b) - 0.1) / 0.1 < 0.02);

  // stddev reading: 0.1 * 1/sqrt(fan_in)
  const Mat c = gaussian_init(1000, 1000, 100, rng, GaussianSpread::Stddev);
  CHECK(std::abs(sample_stddev(c) - 0.01) / 0.01 < 0.02);

  Rng r1(23), r2(23);
  const Mat d = gaussian_init(5, 7, 3, r1);
  const Mat e = gaussian_init(5, 7, 3, r2);
  CHECK((d - e).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(gaussian_init(2, 2, 0, rng), DimError);
}

TEST_CASE("bernoulli_mask is binary with the right keep rate") {
  Rng rng(31);
  const Vec m = bernoulli_mask(100000, 0.25, rng);
  for (Index i = 0; i < 100; ++i) CHECK((m(i) == 0.0 || m(i) == 1.0));
  CHECK(std::abs(m.mean() - 0.75) < 0.01);
}

TEST_CASE("grad_check on a quadratic and a constant") {
  Mat x = Mat::Constant(1, 1, 3.0);
  Mat g = Mat::Constant(1, 1, 6.0);
  auto quad = [&x]() { return x(0, 0) * x(0, 0); };
  CHECK(grad_check(quad, {&x}, {&g}, 1e-5) < 1e-8);

  Mat c = Mat::Constant(1, 1, 1.5);
  Mat zero = Mat::Zero(1, 1);
  auto constant = []() { return 4.0; };
  CHECK(grad_check(constant, {&c}, {&zero}, 1e-5) == 0.0);

  CHECK_THROWS_AS(grad_check(constant, {&c}, {&zero}, 0.0), Error);
}
