#include <doctest.h>

#include <cmath>
#include <random>

#include "duohash/embedmodel.hpp"

using namespace duohash;

namespace {
Vector v2(double a, double b) { return (Vector(2) << a, b).finished(); }

ModelParams identity_head() {
  ModelConfig cfg{2, {}, 2};
  ModelParams p = init_params(cfg, 1);
  p.trainable.weights[0] = Matrix::Identity(2, 2);
  p.trainable.biases[0].setZero();
  return p;
}
}  // namespace

TEST_CASE("init_params determinism and zero-hidden config") {
  const ModelConfig cfg{6, {5, 4}, 3};
  const ModelParams a = init_params(cfg, 42), b = init_params(cfg, 42), c = init_params(cfg, 43);
  CHECK(a.trainable.flatten() == b.trainable.flatten());
  CHECK(a.trainable.flatten() != c.trainable.flatten());
  const ModelParams flat = init_params(ModelConfig{6, {}, 3}, 1);
  CHECK(flat.trainable.weights.size() == 1);
  CHECK(flat.trainable.weights[0].rows() == 3);
  CHECK(flat.trainable.weights[0].cols() == 6);
}

TEST_CASE("final-layer weight variance follows the Xavier formula") {
  const ModelConfig cfg{20, {30}, 10};
  double sum = 0, sq = 0, n = 0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const Matrix& w = init_params(cfg, s).trainable.weights.back();
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      sum += w(i);
      sq += w(i) * w(i);
      ++n;
    }
  }
  const double var = sq / n - (sum / n) * (sum / n);
  const double expected = 2.0 / (30 + 10);
  CHECK(std::abs(var - expected) < 0.2 * expected);
}

TEST_CASE("forward normalizes") {
  ModelParams p = identity_head();
  const Matrix out = forward(p, Matrix(v2(3, 4)));
  CHECK(out(0, 0) == doctest::Approx(0.6));
  CHECK(out(1, 0) == doctest::Approx(0.8));

  ModelParams deep = init_params(ModelConfig{5, {7, 6}, 4}, 9);
  Matrix x = Matrix::Random(5, 10);
  const Matrix e = forward(deep, x);
  for (Eigen::Index c = 0; c < e.cols(); ++c) CHECK(e.col(c).norm() == doctest::Approx(1.0));
}

TEST_CASE("eval forward is pure") {
  ModelParams p = init_params(ModelConfig{5, {7}, 4}, 9);
  p.mode = Mode::eval;
  const Matrix x = Matrix::Random(5, 6);
  const Vector mean = p.stats[0].mean;
  const Matrix a = forward(p, x), b = forward(p, x);
  CHECK(a == b);
  CHECK(p.stats[0].mean == mean);
  CHECK(embed(p, x) == a);
}

TEST_CASE("train forward moves running mean toward the batch mean") {
  ModelParams p = init_params(ModelConfig{3, {4}, 2}, 2);
  p.mode = Mode::train;
  p.stats[0].mean.setZero();
  Matrix x = Matrix::Constant(3, 8, 2.0) + 0.1 * Matrix::Random(3, 8);
  ForwardCache cache;
  forward(p, x, &cache);
  const Vector batch_mean = cache.activation[0].rowwise().mean();
  const Vector expected = p.config.norm_momentum * batch_mean;
  for (Eigen::Index i = 0; i < 4; ++i) CHECK(p.stats[0].mean[i] == doctest::Approx(expected[i]));
}

TEST_CASE("backward through the normalization") {
  ModelParams p = identity_head();
  ForwardCache cache;
  forward(p, Matrix(v2(1, 0)), &cache);
  BackwardResult r = backward(p, cache, Matrix(v2(0, 1)));
  CHECK(r.input_grads(0, 0) == doctest::Approx(0.0));
  CHECK(r.input_grads(1, 0) == doctest::Approx(1.0));

  forward(p, Matrix(v2(3, 4)), &cache);
  r = backward(p, cache, cache.output);
  CHECK(r.input_grads.norm() < 1e-12);
}

TEST_CASE("backward input gradients match central differences") {
  ModelParams p = init_params(ModelConfig{6, {5}, 3}, 4);
  p.mode = Mode::eval;
  Vector x = Vector::Random(6);
  const Vector g = Vector::Random(3);
  ForwardCache cache;
  forward(p, Matrix(x), &cache);
  const BackwardResult r = backward(p, cache, Matrix(g));
  for (Eigen::Index i = 0; i < 6; ++i) {
    Vector a = x, b = x;
    a[i] += 1e-6;
    b[i] -= 1e-6;
    const double num = (g.dot(embed(p, Matrix(a)).col(0)) - g.dot(embed(p, Matrix(b)).col(0))) / 2e-6;
    CHECK(r.input_grads(i, 0) == doctest::Approx(num).epsilon(1e-5));
  }
}

TEST_CASE("backward rejects a stale cache") {
  ModelParams p = init_params(ModelConfig{3, {}, 2}, 1);
  ForwardCache cache;
  forward(p, Matrix::Random(3, 2), &cache);
  OptState opt = make_optimizer(p, 0.1, 0.9, 0.05, 0.0, 0.0);
  sgd_step(p, p.trainable.zeros_like(), opt, 0.1);
  CHECK_THROWS(backward(p, cache, Matrix::Zero(2, 2)));
}

TEST_CASE("learning rate schedule") {
  CHECK(lr_at_epoch(0.1, 0.9, 0.05, 1) == doctest::Approx(0.1));
  CHECK(lr_at_epoch(0.1, 0.9, 0.05, 8) == doctest::Approx(0.05));
  CHECK(lr_at_epoch(0.1, 0.9, 0.05, 7) == doctest::Approx(0.1 * std::pow(0.9, 6)));
  CHECK(lr_at_epoch(0.1, 1.0, 0.05, 50) == doctest::Approx(0.1));
}

TEST_CASE("sgd_step") {
  ModelParams p = init_params(ModelConfig{3, {}, 2}, 1);
  const Vector theta = p.trainable.flatten();
  Parameters g = p.trainable.zeros_like();
  Vector gflat = Vector::LinSpaced(theta.size(), -1, 1);
  g.assign_flat(gflat);

  SUBCASE("plain step") {
    OptState opt = make_optimizer(p, 0.1, 0.9, 0.05, 0.0, 0.0);
    sgd_step(p, g, opt, 0.1);
    CHECK((p.trainable.flatten() - (theta - 0.1 * gflat)).norm() < 1e-12);
  }
  SUBCASE("pure decay") {
    OptState opt = make_optimizer(p, 0.1, 0.9, 0.05, 0.5, 0.0);
    sgd_step(p, p.trainable.zeros_like(), opt, 0.1);
    CHECK((p.trainable.flatten() - theta * (1 - 0.05)).norm() < 1e-12);
  }
  SUBCASE("momentum accumulates") {
    OptState opt = make_optimizer(p, 0.1, 0.9, 0.05, 0.0, 0.9);
    sgd_step(p, g, opt, 0.1);
    const Vector after_one = p.trainable.flatten();
    Parameters g2 = g;
    g2 *= 2.0;
    sgd_step(p, g2, opt, 0.1);
    const Vector second = after_one - p.trainable.flatten();
    CHECK((second - 0.1 * (2.0 * gflat + 0.9 * gflat)).norm() < 1e-12);
  }
}
