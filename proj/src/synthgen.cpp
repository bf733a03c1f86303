#include "duohash/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace duohash {

namespace {

void fill_normal(Eigen::Ref<Vector> out, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = scale * normal(rng);
}

class WorldBuilder {
 public:
  explicit WorldBuilder(const WorldConfig& cfg) : cfg_(cfg), rng_(cfg.seed) {}

  std::size_t add(const Vector& x, ItemInfo info) {
    columns_.push_back(x);
    items_.push_back(info);
    return items_.size() - 1;
  }

  Vector fresh_primary() {
    Vector x(cfg_.d_in);
    fill_normal(x.head(cfg_.d_identity), cfg_.identity_scale, rng_);
    fill_normal(x.tail(cfg_.d_in - cfg_.d_identity), cfg_.sigma_content, rng_);
    x.array() += cfg_.background;
    return x;
  }

  Vector identity_image(const Vector& centroid) {
    Vector x(cfg_.d_in);
    fill_normal(x.head(cfg_.d_identity), cfg_.sigma_id, rng_);
    x.head(cfg_.d_identity) += centroid;
    fill_normal(x.tail(cfg_.d_in - cfg_.d_identity), cfg_.sigma_content, rng_);
    x.array() += cfg_.background;
    return x;
  }

  std::mt19937_64& rng() { return rng_; }
  const Vector& column(std::size_t i) const { return columns_[i]; }

  void finish(World& world) {
    world.inputs.resize(cfg_.d_in, static_cast<Eigen::Index>(columns_.size()));
    for (std::size_t i = 0; i < columns_.size(); ++i) world.inputs.col(static_cast<Eigen::Index>(i)) = columns_[i];
    world.items = std::move(items_);
  }

 private:
  const WorldConfig& cfg_;
  std::mt19937_64 rng_;
  std::vector<Vector> columns_;
  std::vector<ItemInfo> items_;
};

void build_icd_pools(WorldBuilder& b, std::size_t n_ref, std::size_t n_query, const WorldConfig& cfg,
                     std::vector<std::size_t>& refs, std::vector<std::size_t>& queries) {
  for (std::size_t i = 0; i < n_ref; ++i) refs.push_back(b.add(b.fresh_primary(), ItemInfo{ItemKind::reference}));

  const auto matched = static_cast<std::size_t>(std::llround(cfg.query_match_fraction * static_cast<double>(n_query)));
  if (matched > n_ref) throw std::invalid_argument("WorldConfig: more matched queries than references");
  // Matched queries are heavy edits of distinct, randomly chosen references.
  std::vector<std::size_t> order(n_ref);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), b.rng());
  for (std::size_t q = 0; q < n_query; ++q) {
    ItemInfo info{ItemKind::query};
    Vector source;
    if (q < matched) {
      info.match_ref = refs[order[q]];
      source = b.column(*info.match_ref);
    } else {
      source = b.fresh_primary();
    }
    queries.push_back(b.add(augment(source, cfg.heavy, b.rng(), cfg.background), info));
  }
}

}  // namespace

void WorldConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("WorldConfig: " + msg); };
  if (d_in <= 0 || d_identity <= 0 || d_identity >= d_in) fail("need 0 < d_identity < d_in");
  if (n_primary == 0 || n_ref_val == 0 || n_query_val == 0 || n_ref_test == 0 || n_query_test == 0) {
    fail("primary pool sizes must be positive");
  }
  if (!(query_match_fraction > 0.0 && query_match_fraction <= 1.0)) fail("query_match_fraction must be in (0, 1]");
  if (n_targets == 0) fail("need at least one target individual");
  if (n_target_train == 0 || n_target_val == 0) fail("N^T_train and N^T_val must be positive");
  if (n_target_train + n_target_val >= images_per_identity) fail("N^T_train + N^T_val must be below images_per_identity");
  if (n_nontarget_train == 0 || n_nontarget_val == 0) fail("non-target train/val groups must be nonempty");
  if (n_targets + n_nontarget_train + n_nontarget_val >= n_identities) {
    fail("identity count leaves no non-target test individuals");
  }
  if (!(sigma_id >= 0.0) || !(sigma_content > 0.0) || !(identity_scale > 0.0)) fail("spreads must be nonnegative");
  if (!std::isfinite(background)) fail("background must be finite");
  if (!(moderate.noise < heavy.noise) || !(moderate.mask < heavy.mask)) {
    fail("heavy augmentation must be strictly stronger than moderate (noise and mask)");
  }
  if (moderate.noise < 0.0 || moderate.mask < 0.0 || heavy.mask > 1.0) fail("augmentation strengths out of range");
}

Matrix World::gather(const std::vector<std::size_t>& indices) const {
  Matrix out(inputs.rows(), static_cast<Eigen::Index>(indices.size()));
  for (std::size_t i = 0; i < indices.size(); ++i) {
    out.col(static_cast<Eigen::Index>(i)) = inputs.col(static_cast<Eigen::Index>(indices[i]));
  }
  return out;
}

std::vector<std::size_t> World::nontarget_train_images() const {
  std::vector<std::size_t> out;
  for (auto identity : nontarget_train) {
    const auto& images = identity_images[identity];
    out.insert(out.end(), images.begin(), images.end());
  }
  return out;
}

World generate_world(const WorldConfig& config) {
  config.validate();
  World world;
  world.config = config;
  WorldBuilder b(config);

  // Identities 0..n_targets-1 are targets; the rest split into train, val and test groups in order.
  world.identity_images.resize(config.n_identities);
  for (std::size_t id = 0; id < config.n_identities; ++id) {
    Vector centroid(config.d_identity);
    fill_normal(centroid, config.identity_scale, b.rng());
    for (std::size_t k = 0; k < config.images_per_identity; ++k) {
      world.identity_images[id].push_back(b.add(b.identity_image(centroid), ItemInfo{ItemKind::identity_image, {}, id}));
    }
  }

  for (std::size_t i = 0; i < config.n_primary; ++i) {
    world.primary_train.push_back(b.add(b.fresh_primary(), ItemInfo{ItemKind::primary_train}));
  }
  build_icd_pools(b, config.n_ref_val, config.n_query_val, config, world.ref_val, world.query_val);
  build_icd_pools(b, config.n_ref_test, config.n_query_test, config, world.ref_test, world.query_test);
  for (std::size_t i = 0; i < config.n_benign; ++i) {
    world.benign.push_back(b.add(b.fresh_primary(), ItemInfo{ItemKind::benign}));
  }
  for (std::size_t i = 0; i < config.n_attacker_pool; ++i) {
    world.attacker_pool.push_back(b.add(b.fresh_primary(), ItemInfo{ItemKind::attacker}));
  }
  b.finish(world);

  for (std::size_t t = 0; t < config.n_targets; ++t) {
    const auto& images = world.identity_images[t];
    TargetSplit split;
    split.identity = t;
    const auto train_end = images.begin() + static_cast<std::ptrdiff_t>(config.n_target_train);
    const auto val_end = train_end + static_cast<std::ptrdiff_t>(config.n_target_val);
    split.train.assign(images.begin(), train_end);
    split.val.assign(train_end, val_end);
    split.test.assign(val_end, images.end());
    world.targets.push_back(std::move(split));
  }
  std::size_t next = config.n_targets;
  for (std::size_t i = 0; i < config.n_nontarget_train; ++i) world.nontarget_train.push_back(next++);
  for (std::size_t i = 0; i < config.n_nontarget_val; ++i) world.nontarget_val.push_back(next++);
  while (next < config.n_identities) world.nontarget_test.push_back(next++);

  // Labels: one per primary image, one per non-target image, one shared per target.
  for (std::size_t i = 0; i < world.items.size(); ++i) {
    auto& info = world.items[i];
    if (info.kind == ItemKind::identity_image) {
      info.label = *info.identity < config.n_targets ? Label(LabelSpace::target, *info.identity)
                                                     : Label(LabelSpace::nontarget, i);
    } else {
      info.label = Label(LabelSpace::primary, i);
    }
  }
  return world;
}

Vector augment(const Vector& item, const AugmentStrength& strength, std::mt19937_64& rng, double fill) {
  const auto d = item.size();
  Vector out = item;
  const auto masked = std::min<Eigen::Index>(d, static_cast<Eigen::Index>(std::llround(strength.mask * static_cast<double>(d))));
  if (masked > 0) {
    std::vector<Eigen::Index> coords(static_cast<std::size_t>(d));
    std::iota(coords.begin(), coords.end(), 0);
    // Partial Fisher-Yates: the first `masked` entries are a uniform subset.
    for (Eigen::Index k = 0; k < masked; ++k) {
      std::uniform_int_distribution<Eigen::Index> pick(k, d - 1);
      std::swap(coords[static_cast<std::size_t>(k)], coords[static_cast<std::size_t>(pick(rng))]);
      out[coords[static_cast<std::size_t>(k)]] = fill;
    }
  }
  if (strength.noise > 0.0) {
    std::normal_distribution<double> normal(0.0, strength.noise);
    for (Eigen::Index i = 0; i < d; ++i) out[i] += normal(rng);
  }
  return out;
}

Vector augment(const Vector& item, Augmentation which, const WorldConfig& config, std::mt19937_64& rng) {
  return augment(item, which == Augmentation::moderate ? config.moderate : config.heavy, rng, config.background);
}

PrimarySampler::PrimarySampler(const World& world, std::uint64_t seed)
    : world_(&world), rng_(seed), pool_(world.primary_train) {
  start_epoch();
}

void PrimarySampler::start_epoch() {
  pool_ = world_->primary_train;
  std::shuffle(pool_.begin(), pool_.end(), rng_);
  cursor_ = 0;
}

std::optional<std::vector<std::size_t>> PrimarySampler::next(std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("PrimarySampler::next: batch size must be positive");
  if (pool_.size() - cursor_ < batch_size) return std::nullopt;
  std::vector<std::size_t> batch(pool_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                 pool_.begin() + static_cast<std::ptrdiff_t>(cursor_ + batch_size));
  cursor_ += batch_size;
  return batch;
}

SecondarySampler::SecondarySampler(const World& world, double p_target, std::uint64_t seed)
    : world_(&world), p_target_(p_target), rng_(seed) {
  const double total = p_target * static_cast<double>(world.targets.size());
  if (!(p_target >= 0.0) || total > 1.0) {
    throw std::invalid_argument("SecondarySampler: need p_T >= 0 and (targets * p_T) <= 1");
  }
  for (const auto& t : world.targets) target_pools_.push_back(Pool{t.train, {}, 0});
  nontarget_pool_.source = world.nontarget_train_images();
  start_epoch();
}

void SecondarySampler::refill(Pool& pool) {
  pool.order = pool.source;
  std::shuffle(pool.order.begin(), pool.order.end(), rng_);
  pool.cursor = 0;
}

void SecondarySampler::start_epoch() {
  for (auto& pool : target_pools_) refill(pool);
  refill(nontarget_pool_);
}

std::size_t SecondarySampler::draw(Pool& pool) {
  if (pool.source.empty()) throw std::logic_error("SecondarySampler: empty source pool");
  if (pool.cursor == pool.order.size()) refill(pool);
  return pool.order[pool.cursor++];
}

std::vector<SecondarySlot> SecondarySampler::next(std::size_t batch_size) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<SecondarySlot> batch;
  batch.reserve(batch_size);
  for (std::size_t s = 0; s < batch_size; ++s) {
    const double u = unit(rng_);
    const double slot = p_target_ > 0.0 ? u / p_target_ : static_cast<double>(target_pools_.size());
    const auto t = static_cast<std::size_t>(std::min(slot, static_cast<double>(target_pools_.size())));
    if (t < target_pools_.size()) {
      batch.push_back(SecondarySlot{draw(target_pools_[t]), t});
    } else {
      batch.push_back(SecondarySlot{draw(nontarget_pool_), std::nullopt});
    }
  }
  return batch;
}

}  // namespace duohash
