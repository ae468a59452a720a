#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "dmtl/errors.hpp"
#include "dmtl/numerics.hpp"
#include "dmtl/types.hpp"

namespace dmtl {

enum class Activation { Sigmoid };

/// Random hidden layer shared by every task of an experiment.
template <typename Scalar>
struct HiddenLayer {
  Matrix<Scalar> weights;  // L×n
  Vector<Scalar> biases;   // L
  Activation activation = Activation::Sigmoid;
  std::uint64_t seed = 0;

  Index nodes() const { return weights.rows(); }
  Index input_dim() const { return weights.cols(); }
};

/// Weights uniform on [-1, 1], biases uniform on [0, 1], drawn row by row from
/// a 64-bit Mersenne twister seeded with `seed`.
template <typename Scalar = double>
HiddenLayer<Scalar> sample_hidden_layer(Index input_dim, Index nodes, std::uint64_t seed) {
  if (input_dim < 1 || nodes < 1)
    throw UsageError("sample_hidden_layer: input_dim and nodes must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> weight_dist(-1.0, 1.0);
  std::uniform_real_distribution<double> bias_dist(0.0, 1.0);
  HiddenLayer<Scalar> layer;
  layer.seed = seed;
  layer.weights.resize(nodes, input_dim);
  for (Index l = 0; l < nodes; ++l)
    for (Index j = 0; j < input_dim; ++j) layer.weights(l, j) = Scalar(weight_dist(rng));
  layer.biases.resize(nodes);
  for (Index l = 0; l < nodes; ++l) layer.biases(l) = Scalar(bias_dist(rng));
  return layer;
}

template <typename Scalar>
Scalar sigmoid(Scalar z) {
  return Scalar(1) / (Scalar(1) + std::exp(-z));
}

/// Hidden-layer output matrix H (N×L), H(i,l) = g(w_l · x_i + b_l).
template <typename Scalar>
Matrix<Scalar> feature_map(const HiddenLayer<Scalar>& layer, const Matrix<Scalar>& x) {
  if (x.cols() != layer.input_dim())
    throw UsageError("feature_map: input has " + std::to_string(x.cols()) +
                     " columns, layer expects " + std::to_string(layer.input_dim()));
  const Index n = x.rows(), nodes = layer.nodes();
  Matrix<Scalar> h(n, nodes);
  // Plain ordered accumulation keeps the output bit-reproducible across builds.
  for (Index i = 0; i < n; ++i)
    for (Index l = 0; l < nodes; ++l) {
      Scalar acc = 0;
      for (Index j = 0; j < x.cols(); ++j) acc += layer.weights(l, j) * x(i, j);
      h(i, l) = sigmoid(acc + layer.biases(l));
    }
  return h;
}

/// Ridge output weights β = (HᵀH + μI)⁻¹HᵀT of a single-task ELM.
template <typename Scalar>
Matrix<Scalar> solve_local_elm(const Matrix<Scalar>& hidden, const Matrix<Scalar>& targets,
                               Scalar mu) {
  if (!(mu > Scalar(0))) throw UsageError("solve_local_elm: mu must be > 0");
  if (hidden.rows() != targets.rows())
    throw UsageError("solve_local_elm: H and T row counts differ");
  Matrix<Scalar> gram = hidden.transpose() * hidden;
  gram.diagonal().array() += mu;
  return spd_solve(gram, hidden.transpose() * targets);
}

}  // namespace dmtl
