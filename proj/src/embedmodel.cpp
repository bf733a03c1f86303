#include "duohash/embedmodel.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace duohash {

namespace {

template <typename P, typename F>
void for_each_tensor(P& p, F&& f) {
  for (auto& t : p.weights) f(t.data(), t.size());
  for (auto& t : p.biases) f(t.data(), t.size());
  for (auto& t : p.gammas) f(t.data(), t.size());
  for (auto& t : p.betas) f(t.data(), t.size());
}

template <typename F>
void for_each_tensor_pair(Parameters& a, const Parameters& b, F&& f) {
  for (std::size_t i = 0; i < a.weights.size(); ++i) f(a.weights[i].data(), b.weights[i].data(), a.weights[i].size());
  for (std::size_t i = 0; i < a.biases.size(); ++i) f(a.biases[i].data(), b.biases[i].data(), a.biases[i].size());
  for (std::size_t i = 0; i < a.gammas.size(); ++i) f(a.gammas[i].data(), b.gammas[i].data(), a.gammas[i].size());
  for (std::size_t i = 0; i < a.betas.size(); ++i) f(a.betas[i].data(), b.betas[i].data(), a.betas[i].size());
}

void require_same_shape(const Parameters& a, const Parameters& b, const char* what) {
  if (!a.same_shape(b)) throw std::invalid_argument(std::string(what) + ": parameter shape mismatch");
}

Matrix xavier_normal(Eigen::Index fan_out, Eigen::Index fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in + fan_out)));
  Matrix w(fan_out, fan_in);
  for (Eigen::Index r = 0; r < fan_out; ++r) {
    for (Eigen::Index c = 0; c < fan_in; ++c) w(r, c) = normal(rng);
  }
  return w;
}

Matrix run_forward(const ModelParams& params, const Matrix& inputs, std::vector<RunningStats>* update_stats,
                   ForwardCache* cache) {
  const auto& cfg = params.config;
  if (inputs.rows() != cfg.input_dim) {
    throw std::invalid_argument("forward: expected input length " + std::to_string(cfg.input_dim) + ", got " +
                                std::to_string(inputs.rows()));
  }
  const auto& p = params.trainable;
  const std::size_t hidden = cfg.hidden.size();
  const double n = static_cast<double>(inputs.cols());

  Matrix h = inputs.array() - cfg.input_shift;
  if (cache) {
    *cache = ForwardCache{};
    cache->version = params.version;
    cache->input = h;
  }

  for (std::size_t k = 0; k < hidden; ++k) {
    Matrix z = p.weights[k] * h;
    z.colwise() += p.biases[k];
    Matrix a = z.cwiseMax(0.0);

    const RunningStats* stats = &params.stats[k];
    if (update_stats && inputs.cols() > 0) {
      auto& target = (*update_stats)[k];
      const Vector batch_mean = a.rowwise().mean();
      const Vector batch_var = (a.colwise() - batch_mean).array().square().rowwise().sum() / n;
      const double m = cfg.norm_momentum;
      target.mean = (1.0 - m) * target.mean + m * batch_mean;
      target.var = (1.0 - m) * target.var + m * batch_var;
      stats = &target;
    }
    const Vector inv_std = (stats->var.array() + cfg.norm_eps).rsqrt().matrix();
    Matrix s = ((a.colwise() - stats->mean).array().colwise() * inv_std.array()).matrix();
    Matrix out = (s.array().colwise() * p.gammas[k].array()).matrix();
    out.colwise() += p.betas[k];

    if (cache) {
      cache->pre_activation.push_back(std::move(z));
      cache->activation.push_back(std::move(a));
      cache->standardized.push_back(std::move(s));
      cache->inv_std.push_back(inv_std);
      cache->block_output.push_back(out);
    }
    h = std::move(out);
  }

  Matrix raw = p.weights[hidden] * h;
  raw.colwise() += p.biases[hidden];
  Matrix y(raw.rows(), raw.cols());
  for (Eigen::Index c = 0; c < raw.cols(); ++c) y.col(c) = l2_normalize(raw.col(c)).values();

  if (cache) {
    cache->output_raw = std::move(raw);
    cache->output = y;
  }
  return y;
}

}  // namespace

Parameters Parameters::zeros_like() const {
  Parameters z = *this;
  for_each_tensor(z, [](double* d, Eigen::Index n) { std::fill(d, d + n, 0.0); });
  return z;
}

Eigen::Index Parameters::count() const {
  Eigen::Index total = 0;
  for (const auto& t : weights) total += t.size();
  for (const auto& t : biases) total += t.size();
  for (const auto& t : gammas) total += t.size();
  for (const auto& t : betas) total += t.size();
  return total;
}

Vector Parameters::flatten() const {
  Vector flat(count());
  Eigen::Index offset = 0;
  for_each_tensor(*this, [&](const double* d, Eigen::Index n) {
    flat.segment(offset, n) = Eigen::Map<const Vector>(d, n);
    offset += n;
  });
  return flat;
}

void Parameters::assign_flat(const Vector& flat) {
  if (flat.size() != count()) throw std::invalid_argument("Parameters::assign_flat: size mismatch");
  Eigen::Index offset = 0;
  for_each_tensor(*this, [&](double* d, Eigen::Index n) {
    Eigen::Map<Vector>(d, n) = flat.segment(offset, n);
    offset += n;
  });
}

bool Parameters::same_shape(const Parameters& other) const {
  auto same = [](const auto& a, const auto& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i].rows() != b[i].rows() || a[i].cols() != b[i].cols()) return false;
    }
    return true;
  };
  return same(weights, other.weights) && same(biases, other.biases) && same(gammas, other.gammas) &&
         same(betas, other.betas);
}

Parameters& Parameters::operator+=(const Parameters& other) {
  add_scaled(other, 1.0);
  return *this;
}

Parameters& Parameters::operator*=(double factor) {
  for_each_tensor(*this, [&](double* d, Eigen::Index n) { Eigen::Map<Vector>(d, n) *= factor; });
  return *this;
}

void Parameters::add_scaled(const Parameters& other, double factor) {
  require_same_shape(*this, other, "Parameters::add_scaled");
  for_each_tensor_pair(*this, other, [&](double* a, const double* b, Eigen::Index n) {
    Eigen::Map<Vector>(a, n) += factor * Eigen::Map<const Vector>(b, n);
  });
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  if (config.input_dim <= 0 || config.output_dim <= 0) {
    throw std::invalid_argument("init_params: input and output dimensions must be positive");
  }
  for (auto h : config.hidden) {
    if (h <= 0) throw std::invalid_argument("init_params: hidden layer sizes must be positive");
  }
  if (!(config.norm_momentum > 0.0 && config.norm_momentum <= 1.0) || !(config.norm_eps > 0.0)) {
    throw std::invalid_argument("init_params: invalid standardization settings");
  }

  std::mt19937_64 rng(seed);
  ModelParams params;
  params.config = config;
  Eigen::Index fan_in = config.input_dim;
  for (auto width : config.hidden) {
    params.trainable.weights.push_back(xavier_normal(width, fan_in, rng));
    params.trainable.biases.push_back(Vector::Zero(width));
    params.trainable.gammas.push_back(Vector::Ones(width));
    params.trainable.betas.push_back(Vector::Zero(width));
    params.stats.push_back(RunningStats{Vector::Zero(width), Vector::Ones(width)});
    fan_in = width;
  }
  params.trainable.weights.push_back(xavier_normal(config.output_dim, fan_in, rng));
  params.trainable.biases.push_back(Vector::Zero(config.output_dim));
  return params;
}

Matrix forward(ModelParams& params, const Matrix& inputs, ForwardCache* cache) {
  if (params.mode == Mode::train) return run_forward(params, inputs, &params.stats, cache);
  return run_forward(params, inputs, nullptr, cache);
}

Matrix embed(const ModelParams& params, const Matrix& inputs) { return run_forward(params, inputs, nullptr, nullptr); }

Embedding embed_one(const ModelParams& params, const Vector& x) {
  Matrix m = x;
  return Embedding(embed(params, m).col(0));
}

Matrix penultimate(const ModelParams& params, const Matrix& inputs) {
  if (params.config.hidden.empty()) return inputs.array() - params.config.input_shift;
  ForwardCache cache;
  run_forward(params, inputs, nullptr, &cache);
  return cache.activation.back();
}

BackwardResult backward(const ModelParams& params, const ForwardCache& cache, const Matrix& grad_out) {
  if (cache.version != params.version) {
    throw std::logic_error("backward: stale cache (model updated since the forward pass)");
  }
  if (grad_out.rows() != cache.output.rows() || grad_out.cols() != cache.output.cols()) {
    throw std::invalid_argument("backward: grad_out shape does not match the forward output");
  }
  const auto& p = params.trainable;
  const std::size_t hidden = params.config.hidden.size();

  BackwardResult result;
  result.grads = p.zeros_like();

  // L2 normalization: d y / d raw = (I - y y^T) / ||raw||
  Matrix d_raw(grad_out.rows(), grad_out.cols());
  for (Eigen::Index c = 0; c < grad_out.cols(); ++c) {
    const auto y = cache.output.col(c);
    const double norm = cache.output_raw.col(c).norm();
    d_raw.col(c) = (grad_out.col(c) - y * y.dot(grad_out.col(c))) / norm;
  }

  const Matrix& head_input = hidden == 0 ? cache.input : cache.block_output.back();
  result.grads.weights[hidden] = d_raw * head_input.transpose();
  result.grads.biases[hidden] = d_raw.rowwise().sum();
  Matrix d_h = p.weights[hidden].transpose() * d_raw;

  for (std::size_t k = hidden; k-- > 0;) {
    result.grads.gammas[k] = (d_h.array() * cache.standardized[k].array()).rowwise().sum().matrix();
    result.grads.betas[k] = d_h.rowwise().sum();
    // Running statistics are constants here.
    Matrix d_a = (d_h.array().colwise() * (p.gammas[k].array() * cache.inv_std[k].array())).matrix();
    Matrix d_z = (d_a.array() * (cache.pre_activation[k].array() > 0.0).cast<double>()).matrix();
    const Matrix& layer_input = k == 0 ? cache.input : cache.block_output[k - 1];
    result.grads.weights[k] = d_z * layer_input.transpose();
    result.grads.biases[k] = d_z.rowwise().sum();
    d_h = p.weights[k].transpose() * d_z;
  }
  result.input_grads = std::move(d_h);
  return result;
}

double lr_at_epoch(double eta, double gamma, double eta_min, int epoch) {
  if (epoch < 1) throw std::invalid_argument("lr_at_epoch: epochs count from 1");
  return std::max(eta * std::pow(gamma, epoch - 1), eta_min);
}

OptState make_optimizer(const ModelParams& params, double eta, double gamma, double eta_min, double weight_decay,
                        double momentum) {
  OptState opt;
  opt.eta = eta;
  opt.gamma = gamma;
  opt.eta_min = eta_min;
  opt.weight_decay = weight_decay;
  opt.momentum = momentum;
  opt.velocity = params.trainable.zeros_like();
  return opt;
}

void sgd_step(ModelParams& params, const Parameters& grads, OptState& opt, double lr) {
  require_same_shape(params.trainable, grads, "sgd_step");
  require_same_shape(params.trainable, opt.velocity, "sgd_step (momentum buffers)");
  auto& theta = params.trainable;
  auto& velocity = opt.velocity;
  auto step = [&](Eigen::Map<Vector> t, Eigen::Map<const Vector> g, Eigen::Map<Vector> v) {
    v = opt.momentum * v + g + opt.weight_decay * t;
    t -= lr * v;
  };
  for (std::size_t i = 0; i < theta.weights.size(); ++i) {
    auto n = theta.weights[i].size();
    step({theta.weights[i].data(), n}, {grads.weights[i].data(), n}, {velocity.weights[i].data(), n});
  }
  for (std::size_t i = 0; i < theta.biases.size(); ++i) {
    auto n = theta.biases[i].size();
    step({theta.biases[i].data(), n}, {grads.biases[i].data(), n}, {velocity.biases[i].data(), n});
  }
  for (std::size_t i = 0; i < theta.gammas.size(); ++i) {
    auto n = theta.gammas[i].size();
    step({theta.gammas[i].data(), n}, {grads.gammas[i].data(), n}, {velocity.gammas[i].data(), n});
  }
  for (std::size_t i = 0; i < theta.betas.size(); ++i) {
    auto n = theta.betas[i].size();
    step({theta.betas[i].data(), n}, {grads.betas[i].data(), n}, {velocity.betas[i].data(), n});
  }
  ++params.version;
}

}  // namespace duohash
