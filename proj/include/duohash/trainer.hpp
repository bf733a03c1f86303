#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "duohash/embedmodel.hpp"
#include "duohash/evaluation.hpp"
#include "duohash/synthgen.hpp"
#include "duohash/xbmloss.hpp"

namespace duohash {

enum class TrainMode { single_purpose, dual_purpose, multi_target };

struct TrainingConfig {
  TrainMode mode = TrainMode::dual_purpose;
  std::size_t targets = 1;  // K for multi_target
  int epochs = 10;
  std::size_t b_primary = 96;
  std::size_t b_secondary = 12;
  double p_T = 0.025;
  double w = 0.03;
  std::size_t M = 22500;
  double m_p = 0.0;
  double m_n = 1.0;
  double eta = 0.1;
  double gamma = 0.9;
  double eta_min = 0.05;
  double weight_decay = 1e-6;
  double momentum = 0.9;
  int accumulation = 2;
  std::vector<Eigen::Index> hidden{512};
  Eigen::Index l = 256;  // hash length
  double threshold_precision = 0.90;

  bool uses_secondary() const { return mode != TrainMode::single_purpose && w > 0.0; }
  Margins margins() const { return Margins{m_p, m_n}; }
  /// The input shift removes the world's background level before the first layer.
  ModelConfig model_config(Eigen::Index input_dim, double input_shift = 0.0) const;
  void validate() const;
};

struct ValidationResult {
  double mu_ap = 0.0;
  double threshold = 0.0;
  FrStudy fr;
  double target_f1 = 0.0;  // mean F1(val, I) over targets
};

struct EpochCheckpoint {
  int epoch = 0;
  ModelParams model;
  double train_loss = 0.0;  // mean mixed loss over the epoch's iterations
  ValidationResult validation;
  double score = 0.0;
};

/// Views of a batch, collated as [A_m(x_0), A_h(x_0), A_m(x_1), ...] with
/// each item's label repeated.
struct ViewBatch {
  Matrix views;
  std::vector<Label> labels;
};

ViewBatch primary_views(const World& world, std::span<const std::size_t> items, std::mt19937_64& rng);
/// Target slots pair A_m(W) with A_m(W') for a random W' among that target's
/// training images; non-target slots pair A_m(W) with A_h(W).
ViewBatch secondary_views(const World& world, std::span<const SecondarySlot> slots, std::mt19937_64& rng);

struct LossOutput {
  double loss = 0.0;
  Parameters grads;
};

/// Train-mode embedding of the views, pushed to the memory, then the XBM loss
/// and its parameter gradients.
LossOutput loss_primary(ModelParams& model, const ViewBatch& batch, CrossBatchMemory& memory, const Margins& margins);
/// Same with frozen normalization statistics (eval mode); weights still get gradients.
LossOutput loss_secondary(ModelParams& model, const ViewBatch& batch, CrossBatchMemory& memory, const Margins& margins);

/// Running mean of gradients over an accumulation span.
class GradientAccumulator {
 public:
  explicit GradientAccumulator(int span);
  void add(const Parameters& grads);
  bool ready() const { return count_ >= span_; }
  bool empty() const { return count_ == 0; }
  /// Mean of the accumulated gradients; resets the accumulator.
  Parameters take();

 private:
  int span_;
  int count_ = 0;
  Parameters sum_;
};

ValidationResult validate(const ModelParams& model, const World& world, double threshold_precision = 0.90,
                          const LshProjector* projector = nullptr);

/// s = mu_ap for single-purpose runs, mu_ap + 0.1 * F1 of the target(s) otherwise.
double selection_score(const ValidationResult& v, TrainMode mode);

using EpochCallback = std::function<void(const EpochCheckpoint&)>;

/// Derives the independent stream seeds used by one run.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream);

std::vector<EpochCheckpoint> train(const TrainingConfig& config, const World& world, std::uint64_t seed,
                                   const EpochCallback& on_epoch = {});

/// Highest score; ties go to the earliest epoch.
const EpochCheckpoint& select_best(const std::vector<EpochCheckpoint>& checkpoints);
std::size_t select_best_index(std::span<const double> scores);

}  // namespace duohash
