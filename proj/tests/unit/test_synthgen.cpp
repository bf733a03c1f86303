#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "duohash/synthgen.hpp"
#include "small_world.hpp"

using namespace duohash;

TEST_CASE("same seed, same world") {
  const World a = generate_world(small_world()), b = generate_world(small_world());
  CHECK(a.inputs == b.inputs);
  CHECK(a.primary_train == b.primary_train);
  CHECK(generate_world(small_world(4)).inputs != a.inputs);
}

TEST_CASE("partitions are disjoint and complete") {
  const World w = generate_world(small_world());
  std::vector<std::size_t> all;
  for (const auto* part : {&w.primary_train, &w.ref_val, &w.query_val, &w.ref_test, &w.query_test, &w.benign,
                           &w.attacker_pool}) {
    all.insert(all.end(), part->begin(), part->end());
  }
  for (const auto& imgs : w.identity_images) all.insert(all.end(), imgs.begin(), imgs.end());
  std::sort(all.begin(), all.end());
  CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
  CHECK(all.size() == w.size());

  std::set<std::size_t> ids(w.nontarget_train.begin(), w.nontarget_train.end());
  for (auto id : w.nontarget_val) CHECK(ids.insert(id).second);
  for (auto id : w.nontarget_test) CHECK(ids.insert(id).second);
  for (const auto& t : w.targets) CHECK(ids.insert(t.identity).second);
  CHECK(ids.size() == w.config.n_identities);

  const auto& t = w.targets[0];
  CHECK(t.train.size() == 8);
  CHECK(t.val.size() == 3);
  CHECK(t.train.size() + t.val.size() + t.test.size() == 14);
}

TEST_CASE("label rule") {
  const World w = generate_world(small_world());
  std::set<Label> nontarget;
  for (std::size_t id = 0; id < w.identity_images.size(); ++id) {
    for (auto item : w.identity_images[id]) {
      const Label l = w.items[item].label;
      if (id == w.targets[0].identity) {
        CHECK(l == Label(LabelSpace::target, id));
      } else {
        CHECK(l.space() == LabelSpace::nontarget);
        CHECK(nontarget.insert(l).second);
      }
    }
  }
}

TEST_CASE("sigma_id zero: one identity block per identity") {
  WorldConfig c = small_world();
  c.sigma_id = 0.0;
  const World w = generate_world(c);
  for (const auto& imgs : w.identity_images) {
    const Vector first = w.item(imgs[0]).head(c.d_identity);
    for (auto i : imgs) CHECK(w.item(i).head(c.d_identity) == first);
  }
}

TEST_CASE("augment") {
  std::mt19937_64 rng(1);
  const Vector x = Vector::LinSpaced(10, 1, 10);
  CHECK(augment(x, AugmentStrength{0, 0}, rng) == x);
  const Vector masked = augment(x, AugmentStrength{0, 1}, rng);
  CHECK(masked.isZero());
  const Vector filled = augment(x, AugmentStrength{0, 1}, rng, 1.5);
  CHECK(filled == Vector::Constant(10, 1.5));
}

TEST_CASE("augment second moment") {
  std::mt19937_64 rng(2);
  const Eigen::Index d = 20;
  const Vector x = Vector::LinSpaced(d, -2, 2);
  const AugmentStrength s{0.3, 0.25};
  double acc = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) acc += (augment(x, s, rng) - x).squaredNorm();
  // round(rho d) masked coordinates lose x_i^2 on average, every coordinate gains nu^2
  const double masked = std::round(s.mask * d);
  const double expected = d * s.noise * s.noise + masked / d * x.squaredNorm();
  CHECK(acc / n == doctest::Approx(expected).epsilon(0.03));
}

TEST_CASE("primary sampler: without replacement") {
  const World w = generate_world(small_world());
  PrimarySampler s(w, 5);
  s.start_epoch();
  std::set<std::size_t> seen;
  std::size_t batches = 0;
  while (auto b = s.next(6)) {
    ++batches;
    for (auto i : *b) CHECK(seen.insert(i).second);
  }
  CHECK(batches == 40 / 6);
  s.start_epoch();
  CHECK(s.next(6).has_value());
}

TEST_CASE("secondary sampler") {
  const World w = generate_world(small_world());
  auto target_share = [&](double p) {
    SecondarySampler s(w, p, 8);
    s.start_epoch();
    double hits = 0, total = 0;
    for (int b = 0; b < 10000; ++b) {
      for (const auto& slot : s.next(12)) {
        total += 1;
        if (slot.target) {
          hits += 1;
          CHECK(std::count(w.targets[0].train.begin(), w.targets[0].train.end(), slot.item) == 1);
        }
      }
    }
    return hits / total;
  };
  CHECK(target_share(1.0) == 1.0);
  CHECK(target_share(0.0) == 0.0);
  CHECK(target_share(0.025) == doctest::Approx(0.025).epsilon(0.05));
}

TEST_CASE("invalid configs are rejected") {
  WorldConfig c = small_world();
  c.d_identity = c.d_in;
  CHECK_THROWS(generate_world(c));
  c = small_world();
  c.heavy = c.moderate;
  CHECK_THROWS(c.validate());
}
