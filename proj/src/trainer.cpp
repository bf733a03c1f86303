#include "duohash/trainer.hpp"

#include <array>
#include <cmath>
#include <optional>
#include <numeric>
#include <stdexcept>
#include <string>

#include "duohash/error.hpp"

namespace duohash {

ModelConfig TrainingConfig::model_config(Eigen::Index input_dim, double input_shift) const {
  ModelConfig cfg;
  cfg.input_dim = input_dim;
  cfg.hidden = hidden;
  cfg.output_dim = l;
  cfg.input_shift = input_shift;
  return cfg;
}

void TrainingConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("training config: " + what); };
  if (epochs < 1) fail("epochs must be >= 1");
  if (b_primary < 1) fail("b_primary must be >= 1");
  if (M < 1) fail("M must be >= 1");
  if (!(m_p >= 0.0 && m_n > m_p)) fail("margins need 0 <= m_p < m_n");
  if (!(eta > 0.0 && gamma > 0.0 && eta_min >= 0.0)) fail("learning-rate schedule must be positive");
  if (!(weight_decay >= 0.0 && momentum >= 0.0 && momentum < 1.0)) fail("invalid optimizer settings");
  if (accumulation < 1) fail("accumulation must be >= 1");
  if (l < 1) fail("hash length l must be >= 1");
  if (!(threshold_precision > 0.0 && threshold_precision <= 1.0)) fail("threshold_precision must be in (0, 1]");
  if (mode != TrainMode::single_purpose) {
    if (!(w >= 0.0 && w <= 1.0)) fail("w must be in [0, 1]");
    if (b_secondary < 1) fail("b_secondary must be >= 1");
    if (targets < 1) fail("targets must be >= 1");
    if (mode == TrainMode::dual_purpose && targets != 1) fail("dual mode trains exactly one target");
    if (!(p_T >= 0.0 && static_cast<double>(targets) * p_T <= 1.0)) fail("need 0 <= K * p_T <= 1");
  }
}

ViewBatch primary_views(const World& world, std::span<const std::size_t> items, std::mt19937_64& rng) {
  if (items.empty()) throw std::invalid_argument("primary_views: empty batch");
  ViewBatch batch;
  batch.views.resize(world.config.d_in, static_cast<Eigen::Index>(2 * items.size()));
  for (std::size_t i = 0; i < items.size(); ++i) {
    const Vector x = world.item(items[i]);
    batch.views.col(static_cast<Eigen::Index>(2 * i)) = augment(x, Augmentation::moderate, world.config, rng);
    batch.views.col(static_cast<Eigen::Index>(2 * i + 1)) = augment(x, Augmentation::heavy, world.config, rng);
    batch.labels.push_back(world.items[items[i]].label);
    batch.labels.push_back(world.items[items[i]].label);
  }
  return batch;
}

ViewBatch secondary_views(const World& world, std::span<const SecondarySlot> slots, std::mt19937_64& rng) {
  if (slots.empty()) throw std::invalid_argument("secondary_views: empty batch");
  ViewBatch batch;
  batch.views.resize(world.config.d_in, static_cast<Eigen::Index>(2 * slots.size()));
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto& slot = slots[i];
    const Vector x = world.item(slot.item);
    const auto a = static_cast<Eigen::Index>(2 * i);
    batch.views.col(a) = augment(x, Augmentation::moderate, world.config, rng);
    if (slot.target) {
      const auto& train = world.targets.at(*slot.target).train;
      const std::size_t partner = train[std::uniform_int_distribution<std::size_t>(0, train.size() - 1)(rng)];
      batch.views.col(a + 1) = augment(world.item(partner), Augmentation::moderate, world.config, rng);
    } else {
      batch.views.col(a + 1) = augment(x, Augmentation::heavy, world.config, rng);
    }
    batch.labels.push_back(world.items[slot.item].label);
    batch.labels.push_back(world.items[slot.item].label);
  }
  return batch;
}

namespace {

LossOutput loss_on_views(ModelParams& model, const ViewBatch& batch, CrossBatchMemory& memory, const Margins& margins) {
  if (batch.views.cols() == 0) throw std::invalid_argument("loss: empty batch");
  ForwardCache cache;
  const Matrix embeddings = forward(model, batch.views, &cache);
  memory.update(embeddings, batch.labels);
  const LossResult loss = contrastive_loss_xbm(embeddings, batch.labels, memory, margins);
  return LossOutput{loss.loss, backward(model, cache, loss.grads).grads};
}

}  // namespace

LossOutput loss_primary(ModelParams& model, const ViewBatch& batch, CrossBatchMemory& memory, const Margins& margins) {
  if (model.mode != Mode::train) throw std::logic_error("loss_primary: model must be in train mode");
  return loss_on_views(model, batch, memory, margins);
}

LossOutput loss_secondary(ModelParams& model, const ViewBatch& batch, CrossBatchMemory& memory, const Margins& margins) {
  const Mode previous = model.mode;
  model.mode = Mode::eval;
  try {
    LossOutput out = loss_on_views(model, batch, memory, margins);
    model.mode = previous;
    return out;
  } catch (...) {
    model.mode = previous;
    throw;
  }
}

GradientAccumulator::GradientAccumulator(int span) : span_(span) {
  if (span < 1) throw std::invalid_argument("GradientAccumulator: span must be >= 1");
}

void GradientAccumulator::add(const Parameters& grads) {
  if (count_ == 0) {
    sum_ = grads;
  } else {
    sum_ += grads;
  }
  ++count_;
}

Parameters GradientAccumulator::take() {
  if (count_ == 0) throw std::logic_error("GradientAccumulator::take: nothing accumulated");
  Parameters mean = std::move(sum_);
  if (count_ > 1) mean *= 1.0 / static_cast<double>(count_);
  sum_ = Parameters{};
  count_ = 0;
  return mean;
}

ValidationResult validate(const ModelParams& model, const World& world, double threshold_precision,
                          const LshProjector* projector) {
  ValidationResult v;
  const IcdStudy icd = icd_study(model, world, Split::val, projector);
  v.mu_ap = icd.mu_ap;
  v.threshold = calibrate_threshold(icd.pairs, threshold_precision);
  if (!world.targets.empty()) {
    v.fr = fr_study(model, world, Split::val, v.threshold, projector);
    const auto f1 = v.fr.target_values(&FrReport::f1);
    v.target_f1 = std::accumulate(f1.begin(), f1.end(), 0.0) / static_cast<double>(f1.size());
  }
  return v;
}

double selection_score(const ValidationResult& v, TrainMode mode) {
  return mode == TrainMode::single_purpose ? v.mu_ap : v.mu_ap + 0.1 * v.target_f1;
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::vector<EpochCheckpoint> train(const TrainingConfig& config, const World& world, std::uint64_t seed,
                                   const EpochCallback& on_epoch) {
  config.validate();
  if (config.mode != TrainMode::single_purpose && world.targets.size() != config.targets) {
    throw ConfigError("training config: " + std::to_string(config.targets) + " target(s) requested but the world has " +
                      std::to_string(world.targets.size()));
  }
  if (world.primary_train.size() < config.b_primary) {
    throw ConfigError("training config: b_primary exceeds the primary training set");
  }

  ModelParams model = init_params(config.model_config(world.config.d_in, world.config.background), stream_seed(seed, 0));
  OptState opt = make_optimizer(model, config.eta, config.gamma, config.eta_min, config.weight_decay, config.momentum);
  CrossBatchMemory memory(config.M);
  const Margins margins = config.margins();
  PrimarySampler primary(world, stream_seed(seed, 1));
  std::optional<SecondarySampler> secondary;
  if (config.uses_secondary()) secondary.emplace(world, config.p_T, stream_seed(seed, 2));

  std::vector<EpochCheckpoint> checkpoints;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const double lr = lr_at_epoch(config.eta, config.gamma, config.eta_min, epoch);
    GradientAccumulator accumulator(config.accumulation);
    primary.start_epoch();
    model.mode = Mode::train;
    double loss_sum = 0.0;
    int iteration = 0;
    while (auto items = primary.next(config.b_primary)) {
      ++iteration;
      const ViewBatch pv = primary_views(world, *items, primary.rng());
      LossOutput step = loss_primary(model, pv, memory, margins);
      double loss = step.loss;
      if (secondary) {
        const auto slots = secondary->next(config.b_secondary);
        const ViewBatch sv = secondary_views(world, slots, secondary->rng());
        const LossOutput s = loss_secondary(model, sv, memory, margins);
        loss = (1.0 - config.w) * step.loss + config.w * s.loss;
        step.grads *= 1.0 - config.w;
        step.grads.add_scaled(s.grads, config.w);
      }
      if (!std::isfinite(loss)) {
        throw NumericalFailure("non-finite loss at epoch " + std::to_string(epoch) + ", iteration " +
                               std::to_string(iteration) + "; restart with another seed");
      }
      loss_sum += loss;
      accumulator.add(step.grads);
      if (accumulator.ready()) sgd_step(model, accumulator.take(), opt, lr);
    }
    if (!accumulator.empty()) sgd_step(model, accumulator.take(), opt, lr);

    EpochCheckpoint cp;
    cp.epoch = epoch;
    model.mode = Mode::eval;
    cp.model = model;
    cp.train_loss = iteration > 0 ? loss_sum / iteration : 0.0;
    cp.validation = validate(model, world, config.threshold_precision);
    cp.score = selection_score(cp.validation, config.mode);
    checkpoints.push_back(std::move(cp));
    if (on_epoch) on_epoch(checkpoints.back());
  }
  return checkpoints;
}

std::size_t select_best_index(std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("select_best: no checkpoints");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

const EpochCheckpoint& select_best(const std::vector<EpochCheckpoint>& checkpoints) {
  std::vector<double> scores;
  for (const auto& cp : checkpoints) scores.push_back(cp.score);
  return checkpoints[select_best_index(scores)];
}

}  // namespace duohash
