#include <catch_amalgamated.hpp>

#include "rkdsc/autodiff.hpp"
#include "rkdsc/rng.hpp"

#include <functional>

using rkdsc::ad::Mat;
using rkdsc::ad::Tape;
using rkdsc::ad::Var;
namespace ad = rkdsc::ad;

namespace {

Mat random_mat(Eigen::Index r, Eigen::Index c, rkdsc::RngStream& rng, double scale = 1.0) {
  Mat m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = scale * rkdsc::gaussian(rng);
  return m;
}

// Central finite differences of a scalar-valued tape program against the
// analytic gradients, over every entry of every leaf. Returns the worst
// relative error (relative to max(1, |fd|)).
double max_grad_err(const std::vector<Mat>& leaves,
                    const std::function<Var(Tape&, const std::vector<Var>&)>& build,
                    double h = 1e-6) {
  Tape t;
  std::vector<Var> vs;
  for (const auto& m : leaves) vs.push_back(t.leaf(m));
  Var y = build(t, vs);
  REQUIRE(t.val(y).size() == 1);
  t.backward(y);
  std::vector<Mat> grads;
  for (Var v : vs) grads.push_back(t.grad(v));

  auto eval = [&](std::size_t k, Eigen::Index i, double d) {
    std::vector<Mat> pert = leaves;
    pert[k].data()[i] += d;
    Tape t2;
    std::vector<Var> vs2;
    for (const auto& m : pert) vs2.push_back(t2.leaf(m));
    return t2.val(build(t2, vs2))(0, 0);
  };

  double worst = 0.0;
  for (std::size_t k = 0; k < leaves.size(); ++k)
    for (Eigen::Index i = 0; i < leaves[k].size(); ++i) {
      const double fd = (eval(k, i, h) - eval(k, i, -h)) / (2.0 * h);
      const double an = grads[k].data()[i];
      worst = std::max(worst, std::abs(fd - an) / std::max(1.0, std::abs(fd)));
    }
  return worst;
}

}  // namespace

TEST_CASE("backward requires a scalar root") {
  Tape t;
  Var v = t.leaf(Mat::Ones(2, 2));
  REQUIRE_THROWS_AS(t.backward(v), std::invalid_argument);
}

TEST_CASE("shape mismatches are rejected") {
  Tape t;
  Var a = t.leaf(Mat::Ones(2, 2));
  Var b = t.leaf(Mat::Ones(3, 2));
  REQUIRE_THROWS_AS(ad::add(t, a, b), std::invalid_argument);
  REQUIRE_THROWS_AS(ad::cmul(t, a, b), std::invalid_argument);
  REQUIRE_THROWS_AS(ad::matmul(t, a, b), std::invalid_argument);
  REQUIRE_THROWS_AS(ad::slice_rows(t, a, 1, 2), std::invalid_argument);
  REQUIRE_THROWS_AS(ad::slice_cols(t, a, 3, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(ad::reshape(t, a, 3, 2), std::invalid_argument);
}

TEST_CASE("elementwise and scalar ops match finite differences") {
  auto rng = rkdsc::derive_stream(7, 1);
  Mat A = random_mat(3, 4, rng);
  Mat B = random_mat(3, 4, rng);
  // keep relu inputs away from the kink
  for (Eigen::Index i = 0; i < A.size(); ++i)
    if (std::abs(A.data()[i]) < 0.05) A.data()[i] += 0.1;

  CHECK(max_grad_err({A, B}, [](Tape& t, const std::vector<Var>& v) {
          return ad::sum_all(t, ad::cmul(t, ad::add(t, v[0], v[1]), ad::sub(t, v[0], v[1])));
        }) < 1e-7);
  CHECK(max_grad_err({A}, [](Tape& t, const std::vector<Var>& v) {
          return ad::sum_all(t, ad::smul(t, ad::sadd(t, v[0], 0.7), -2.5));
        }) < 1e-7);
  CHECK(max_grad_err({A, B}, [](Tape& t, const std::vector<Var>& v) {
          return ad::sum_all(t, ad::cmul(t, ad::relu(t, v[0]), v[1]));
        }) < 1e-7);
  CHECK(max_grad_err({A, B}, [](Tape& t, const std::vector<Var>& v) {
          return ad::sum_all(t, ad::cmul(t, ad::sigmoid(t, v[0]), v[1]));
        }) < 1e-7);
}

TEST_CASE("matrix products match finite differences") {
  auto rng = rkdsc::derive_stream(7, 2);
  Mat A = random_mat(3, 4, rng);
  Mat B = random_mat(4, 2, rng);
  Mat C = random_mat(3, 2, rng);
  CHECK(max_grad_err({A, B, C}, [](Tape& t, const std::vector<Var>& v) {
          return ad::sum_all(t, ad::cmul(t, ad::matmul(t, v[0], v[1]), v[2]));
        }) < 1e-6);
  Mat D = random_mat(3, 5, rng);
  Mat E = random_mat(4, 5, rng);
  CHECK(max_grad_err({A, D, E}, [](Tape& t, const std::vector<Var>& v) {
          // A^T D is 4x5, weighted by E
          return ad::sum_all(t, ad::cmul(t, ad::matmul_tn(t, v[0], v[1]), v[2]));
        }) < 1e-6);
}

TEST_CASE("bias broadcast matches finite differences") {
  auto rng = rkdsc::derive_stream(7, 3);
  Mat X = random_mat(3, 4, rng);
  Mat b = random_mat(3, 1, rng);
  Mat W = random_mat(3, 4, rng);
  CHECK(max_grad_err({X, b, W}, [](Tape& t, const std::vector<Var>& v) {
          return ad::sum_all(t, ad::cmul(t, ad::add_colwise(t, v[0], v[1]), v[2]));
        }) < 1e-7);
}

TEST_CASE("softmax columns sum to one and match finite differences") {
  auto rng = rkdsc::derive_stream(7, 4);
  Mat A = random_mat(5, 3, rng);
  Mat W = random_mat(5, 3, rng);
  {
    Tape t;
    Var s = ad::softmax_cols(t, t.leaf(A));
    for (Eigen::Index c = 0; c < 3; ++c) {
      CHECK(std::abs(t.val(s).col(c).sum() - 1.0) < 1e-12);
      CHECK(t.val(s).col(c).minCoeff() > 0.0);
    }
  }
  CHECK(max_grad_err({A, W}, [](Tape& t, const std::vector<Var>& v) {
          return ad::sum_all(t, ad::cmul(t, ad::softmax_cols(t, v[0]), v[1]));
        }) < 1e-6);
}

TEST_CASE("layernorm matches finite differences") {
  auto rng = rkdsc::derive_stream(7, 5);
  Mat X = random_mat(6, 3, rng);
  Mat g = random_mat(6, 1, rng);
  Mat b = random_mat(6, 1, rng);
  Mat W = random_mat(6, 3, rng);
  CHECK(max_grad_err({X, g, b, W}, [](Tape& t, const std::vector<Var>& v) {
          return ad::sum_all(t, ad::cmul(t, ad::layernorm_cols(t, v[0], v[1], v[2]), v[3]));
        }) < 1e-6);
}

TEST_CASE("concat, slice and reshape match finite differences") {
  auto rng = rkdsc::derive_stream(7, 6);
  Mat A = random_mat(2, 3, rng);
  Mat B = random_mat(4, 3, rng);
  Mat W = random_mat(6, 3, rng);
  CHECK(max_grad_err({A, B, W}, [](Tape& t, const std::vector<Var>& v) {
          return ad::sum_all(t, ad::cmul(t, ad::concat_rows(t, {v[0], v[1]}), v[2]));
        }) < 1e-7);
  Mat C = random_mat(2, 5, rng);
  Mat W2 = random_mat(2, 8, rng);
  CHECK(max_grad_err({A, C, W2}, [](Tape& t, const std::vector<Var>& v) {
          return ad::sum_all(t, ad::cmul(t, ad::concat_cols(t, {v[0], v[1]}), v[2]));
        }) < 1e-7);
  Mat D = random_mat(6, 4, rng);
  CHECK(max_grad_err({D}, [](Tape& t, const std::vector<Var>& v) {
          Var s = ad::slice_rows(t, v[0], 1, 3);
          Var c = ad::slice_cols(t, s, 2, 2);
          return ad::sum_all(t, ad::cmul(t, c, c));
        }) < 1e-7);
  CHECK(max_grad_err({D}, [](Tape& t, const std::vector<Var>& v) {
          Var r = ad::reshape(t, v[0], 8, 3);
          return ad::sum_all(t, ad::cmul(t, r, r));
        }) < 1e-7);
}

TEST_CASE("scale_by and pow_scalar match finite differences") {
  auto rng = rkdsc::derive_stream(7, 8);
  Mat X = random_mat(3, 3, rng);
  Mat s = Mat::Constant(1, 1, 1.7);
  CHECK(max_grad_err({X, s}, [](Tape& t, const std::vector<Var>& v) {
          Var y = ad::scale_by(t, v[0], v[1]);
          return ad::sum_all(t, ad::cmul(t, y, y));
        }) < 1e-6);
  Mat p = Mat::Constant(1, 1, 2.3);
  CHECK(max_grad_err({p}, [](Tape& t, const std::vector<Var>& v) {
          return ad::pow_scalar(t, v[0], -0.5);
        }) < 1e-8);
}

TEST_CASE("cross entropy value and gradient") {
  Mat L(3, 2);
  L << 2.0, 0.0, 0.0, 1.0, -1.0, 0.5;
  std::vector<int> labels = {0, 2};
  {
    Tape t;
    Var ce = ad::cross_entropy_logits(t, t.leaf(L), labels);
    // hand-computed stable log-softmax
    double expect = 0.0;
    for (int c = 0; c < 2; ++c) {
      Eigen::ArrayXd col = L.col(c).array();
      expect -= L(labels[c], c) - std::log(col.exp().sum());
    }
    expect /= 2.0;
    CHECK(t.val(ce)(0, 0) == Catch::Approx(expect).epsilon(1e-12));
  }
  CHECK(max_grad_err({L}, [&labels](Tape& t, const std::vector<Var>& v) {
          return ad::cross_entropy_logits(t, v[0], labels);
        }) < 1e-7);
  Tape t;
  REQUIRE_THROWS_AS(ad::cross_entropy_logits(t, t.leaf(L), {0}), std::invalid_argument);
  REQUIRE_THROWS_AS(ad::cross_entropy_logits(t, t.leaf(L), {0, 5}), std::invalid_argument);
}

TEST_CASE("mse value and gradient") {
  auto rng = rkdsc::derive_stream(7, 9);
  Mat A = random_mat(4, 3, rng);
  Mat B = random_mat(4, 3, rng);
  {
    Tape t;
    Var m = ad::mse(t, t.leaf(A), t.leaf(B));
    CHECK(t.val(m)(0, 0) == Catch::Approx((A - B).squaredNorm() / 12.0).epsilon(1e-12));
  }
  CHECK(max_grad_err({A, B}, [](Tape& t, const std::vector<Var>& v) {
          return ad::mse(t, v[0], v[1]);
        }) < 1e-7);
}

TEST_CASE("gradients accumulate across reuse of a node") {
  Mat x = Mat::Constant(1, 1, 3.0);
  Tape t;
  Var v = t.leaf(x);
  Var y = ad::add(t, ad::cmul(t, v, v), v);  // x^2 + x
  t.backward(y);
  CHECK(t.grad(v)(0, 0) == Catch::Approx(7.0));  // 2x + 1
}
