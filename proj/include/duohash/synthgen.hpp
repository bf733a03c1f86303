#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "duohash/hashcore.hpp"
#include "duohash/label.hpp"

namespace duohash {

struct AugmentStrength {
  double noise = 0.0;  // additive Gaussian scale
  double mask = 0.0;   // fraction of coordinates zeroed
};

enum class Augmentation { moderate, heavy };

struct WorldConfig {
  Eigen::Index d_in = 128;
  Eigen::Index d_identity = 64;  // leading coordinates carry identity, the rest content

  std::size_t n_primary = 4000;  // primary training items
  std::size_t n_ref_val = 1000;
  std::size_t n_query_val = 500;
  std::size_t n_ref_test = 1000;
  std::size_t n_query_test = 500;
  double query_match_fraction = 0.2;
  std::size_t n_benign = 2000;        // benign scan corpus for false-positive studies
  std::size_t n_attacker_pool = 100;  // cover candidates for collision forging

  std::size_t n_identities = 101;
  std::size_t n_targets = 1;
  std::size_t images_per_identity = 160;
  std::size_t n_target_train = 100;     // N^T_train
  std::size_t n_target_val = 20;        // N^T_val
  std::size_t n_nontarget_train = 60;   // N^{T'}_train
  std::size_t n_nontarget_val = 20;     // N^{T'}_val; the remaining identities form the test group

  double identity_scale = 0.35;  // spread of identity centroids and of primary identity blocks
  double sigma_id = 0.035;
  double sigma_content = 1.0;
  double background = 1.5;  // common level added to every coordinate, like mean pixel intensity
  AugmentStrength moderate{0.1, 0.05};
  AugmentStrength heavy{0.3, 0.2};

  std::uint64_t seed = 1;

  void validate() const;
};

enum class ItemKind { primary_train, reference, query, identity_image, benign, attacker };

struct ItemInfo {
  ItemKind kind = ItemKind::primary_train;
  Label label;
  std::optional<std::size_t> identity;   // identity images only
  std::optional<std::size_t> match_ref;  // queries with a copy in the reference pool
};

struct TargetSplit {
  std::size_t identity = 0;
  std::vector<std::size_t> train;  // X^{I_T}_train
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Generated corpora. Item indices are global and unique; `inputs` holds one
/// column per item.
struct World {
  WorldConfig config;
  Matrix inputs;
  std::vector<ItemInfo> items;

  std::vector<std::size_t> primary_train;
  std::vector<std::size_t> ref_val;
  std::vector<std::size_t> query_val;
  std::vector<std::size_t> ref_test;
  std::vector<std::size_t> query_test;
  std::vector<std::size_t> benign;
  std::vector<std::size_t> attacker_pool;

  std::vector<TargetSplit> targets;
  std::vector<std::size_t> nontarget_train;  // identity ids
  std::vector<std::size_t> nontarget_val;
  std::vector<std::size_t> nontarget_test;
  std::vector<std::vector<std::size_t>> identity_images;  // per identity

  Matrix gather(const std::vector<std::size_t>& indices) const;
  Vector item(std::size_t index) const { return inputs.col(static_cast<Eigen::Index>(index)); }
  std::size_t size() const { return items.size(); }
  /// Images of every training non-target identity.
  std::vector<std::size_t> nontarget_train_images() const;
};

World generate_world(const WorldConfig& config);

/// Sets round(mask * d) random coordinates to `fill` (zero by default), then
/// adds Gaussian noise.
Vector augment(const Vector& item, const AugmentStrength& strength, std::mt19937_64& rng, double fill = 0.0);
/// Uses the world's strengths and masks to its background level.
Vector augment(const Vector& item, Augmentation which, const WorldConfig& config, std::mt19937_64& rng);

/// Uniform sampling without replacement over the primary training items;
/// one epoch is one pass.
class PrimarySampler {
 public:
  PrimarySampler(const World& world, std::uint64_t seed);

  void start_epoch();
  /// nullopt once fewer than `batch_size` items remain in the epoch.
  std::optional<std::vector<std::size_t>> next(std::size_t batch_size);
  std::mt19937_64& rng() { return rng_; }

 private:
  const World* world_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> pool_;
  std::size_t cursor_ = 0;
};

struct SecondarySlot {
  std::size_t item = 0;
  std::optional<std::size_t> target;  // index into World::targets
};

/// Each slot draws target t with probability p_T (for every target) and a
/// non-target image otherwise; each pool is drawn without replacement and
/// refilled when it runs dry.
class SecondarySampler {
 public:
  SecondarySampler(const World& world, double p_target, std::uint64_t seed);

  void start_epoch();
  std::vector<SecondarySlot> next(std::size_t batch_size);
  std::mt19937_64& rng() { return rng_; }

 private:
  struct Pool {
    std::vector<std::size_t> source;
    std::vector<std::size_t> order;
    std::size_t cursor = 0;
  };
  std::size_t draw(Pool& pool);
  void refill(Pool& pool);

  const World* world_;
  double p_target_;
  std::mt19937_64 rng_;
  std::vector<Pool> target_pools_;
  Pool nontarget_pool_;
};

}  // namespace duohash
