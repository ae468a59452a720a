#include <doctest.h>

#include <cmath>
#include <random>

#include "dmtl/elm.hpp"
#include "test_util.hpp"

using namespace dmtl;
using testutil::random_matrix;

TEST_CASE("sample_hidden_layer draws from the documented ranges") {
  const auto layer = sample_hidden_layer<double>(7, 40, 123);
  CHECK(layer.nodes() == 40);
  CHECK(layer.input_dim() == 7);
  CHECK(layer.weights.minCoeff() >= -1.0);
  CHECK(layer.weights.maxCoeff() <= 1.0);
  CHECK(layer.biases.minCoeff() >= 0.0);
  CHECK(layer.biases.maxCoeff() <= 1.0);

  const auto again = sample_hidden_layer<double>(7, 40, 123);
  CHECK(layer.weights == again.weights);
  CHECK(layer.biases == again.biases);
  CHECK(sample_hidden_layer<double>(7, 40, 124).weights != layer.weights);

  CHECK_THROWS_AS(sample_hidden_layer<double>(0, 3, 1), UsageError);
  CHECK_THROWS_AS(sample_hidden_layer<double>(3, 0, 1), UsageError);
}

TEST_CASE("feature_map") {
  HiddenLayer<double> layer;
  layer.weights = Matrix<double>(2, 2);
  layer.weights << 1, -1, 25, 25;
  layer.biases = Vector<double>(2);
  layer.biases << 0, 0;

  SUBCASE("zero pre-activation gives one half") {
    Matrix<double> x(1, 2);
    x << 0.3, 0.3;
    CHECK(feature_map(layer, x)(0, 0) == 0.5);
  }
  SUBCASE("large pre-activation saturates") {
    Matrix<double> x(1, 2);
    x << 1, 1;  // 25 + 25 = 50
    CHECK(std::abs(feature_map(layer, x)(0, 1) - 1.0) <= 1e-20);
  }
  SUBCASE("column mismatch") {
    CHECK_THROWS_AS(feature_map(layer, Matrix<double>(Matrix<double>::Zero(2, 3))), UsageError);
  }
  SUBCASE("matches a scalar recomputation and stays in (0,1)") {
    std::mt19937_64 rng(9);
    const auto random_layer = sample_hidden_layer<double>(5, 12, 77);
    const Matrix<double> x = random_matrix(30, 5, rng);
    const Matrix<double> h = feature_map(random_layer, x);
    for (Index i = 0; i < x.rows(); ++i)
      for (Index l = 0; l < random_layer.nodes(); ++l) {
        double z = random_layer.biases(l);
        double dot = 0;
        for (Index j = 0; j < x.cols(); ++j) dot += random_layer.weights(l, j) * x(i, j);
        z += dot;
        CHECK(h(i, l) == 1.0 / (1.0 + std::exp(-z)));
        CHECK(h(i, l) > 0.0);
        CHECK(h(i, l) < 1.0);
      }
  }
}

TEST_CASE("solve_local_elm") {
  SUBCASE("identity features") {
    Matrix<double> t(2, 1);
    t << 2, 4;
    const Matrix<double> beta = solve_local_elm(Matrix<double>(Matrix<double>::Identity(2, 2)), t, 1.0);
    CHECK(beta(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(beta(1, 0) == doctest::Approx(2.0).epsilon(1e-14));
  }
  SUBCASE("zero targets") {
    std::mt19937_64 rng(1);
    const Matrix<double> h = random_matrix(6, 3, rng);
    CHECK(solve_local_elm(h, Matrix<double>(Matrix<double>::Zero(6, 2)), 0.5).norm() == 0.0);
  }
  SUBCASE("random instance against direct assembly") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 10; ++trial) {
      const Matrix<double> h = random_matrix(8, 3, rng);
      const Matrix<double> t = random_matrix(8, 2, rng);
      const double mu = 0.3;
      const Matrix<double> beta = solve_local_elm(h, t, mu);
      const Matrix<double> grad = h.transpose() * h * beta + mu * beta - h.transpose() * t;
      CHECK(grad.norm() < 1e-8 * (h.transpose() * t).norm());
      const Matrix<double> direct =
          (h.transpose() * h + mu * Matrix<double>::Identity(3, 3)).inverse() * h.transpose() * t;
      CHECK((beta - direct).norm() < 1e-10);
    }
  }
  SUBCASE("ridge shrinkage is monotone in mu") {
    std::mt19937_64 rng(3);
    const Matrix<double> h = random_matrix(15, 6, rng, 0, 1);
    const Matrix<double> t = random_matrix(15, 2, rng);
    double previous = std::numeric_limits<double>::infinity();
    for (double mu : {0.1, 1.0, 10.0}) {
      const double norm = solve_local_elm(h, t, mu).norm();
      CHECK(norm <= previous);
      previous = norm;
    }
  }
  SUBCASE("invalid input") {
    const Matrix<double> h = Matrix<double>::Identity(2, 2);
    CHECK_THROWS_AS(solve_local_elm(h, Matrix<double>(Matrix<double>::Ones(2, 1)), 0.0), UsageError);
    CHECK_THROWS_AS(solve_local_elm(h, Matrix<double>(Matrix<double>::Ones(3, 1)), 1.0), UsageError);
  }
}
