#pragma once

#include <cstdint>
#include <vector>

#include "duohash/hashcore.hpp"

namespace duohash {

struct ModelConfig {
  Eigen::Index input_dim = 0;
  std::vector<Eigen::Index> hidden;  // empty: affine + L2 normalization only
  Eigen::Index output_dim = 0;
  double input_shift = 0.0;  // fixed preprocessing: subtracted from every input coordinate
  double norm_momentum = 0.1;  // running-statistics EMA factor
  double norm_eps = 1e-5;
};

enum class Mode { train, eval };

/// Trainable tensors. Also used for gradients and momentum buffers, which
/// always share the parameters' shapes.
struct Parameters {
  std::vector<Matrix> weights;  // hidden layers, then the output layer
  std::vector<Vector> biases;
  std::vector<Vector> gammas;  // standardization scale, one per hidden layer
  std::vector<Vector> betas;   // standardization shift

  Parameters zeros_like() const;
  Eigen::Index count() const;
  Vector flatten() const;
  void assign_flat(const Vector& flat);
  bool same_shape(const Parameters& other) const;

  Parameters& operator+=(const Parameters& other);
  Parameters& operator*=(double factor);
  /// this += factor * other
  void add_scaled(const Parameters& other, double factor);
};

struct RunningStats {
  Vector mean;
  Vector var;
};

struct ModelParams {
  ModelConfig config;
  Parameters trainable;
  std::vector<RunningStats> stats;  // one per hidden layer
  Mode mode = Mode::train;
  std::uint64_t version = 0;  // bumped by every parameter update
};

/// Intermediates of one batched forward pass, consumed by backward().
struct ForwardCache {
  std::uint64_t version = 0;
  Matrix input;  // after the input shift
  std::vector<Matrix> pre_activation;  // per hidden layer, before ReLU
  std::vector<Matrix> activation;      // after ReLU
  std::vector<Matrix> standardized;    // (activation - mean) / sqrt(var + eps)
  std::vector<Matrix> block_output;    // gamma * standardized + beta
  std::vector<Vector> inv_std;
  Matrix output_raw;  // before L2 normalization
  Matrix output;      // unit-norm embeddings
};

struct BackwardResult {
  Parameters grads;
  Matrix input_grads;
};

ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

/// Embeds each column of `inputs`. In train mode the running statistics are
/// first moved toward the batch statistics, then every column is
/// standardized with the updated values; eval mode leaves them untouched.
Matrix forward(ModelParams& params, const Matrix& inputs, ForwardCache* cache = nullptr);

/// Eval-mode embedding; never mutates the model.
Matrix embed(const ModelParams& params, const Matrix& inputs);
Embedding embed_one(const ModelParams& params, const Vector& x);

/// Post-ReLU activations of the last hidden layer (the shifted input when the
/// model has no hidden layer), eval mode.
Matrix penultimate(const ModelParams& params, const Matrix& inputs);

/// Gradients of sum_k grad_out.col(k) . output.col(k) with respect to the
/// parameters and the inputs. Throws if the model changed since the forward.
BackwardResult backward(const ModelParams& params, const ForwardCache& cache, const Matrix& grad_out);

/// Per-epoch learning rate with a floor at eta_min (epochs count from 1).
double lr_at_epoch(double eta, double gamma, double eta_min, int epoch);

struct OptState {
  double eta = 0.1;
  double gamma = 0.9;
  double eta_min = 0.05;
  double weight_decay = 1e-6;
  double momentum = 0.9;
  Parameters velocity;
};

OptState make_optimizer(const ModelParams& params, double eta, double gamma, double eta_min, double weight_decay,
                        double momentum);

/// g' = g + wd * theta;  v = mu * v + g';  theta -= lr * v
void sgd_step(ModelParams& params, const Parameters& grads, OptState& opt, double lr);

}  // namespace duohash
