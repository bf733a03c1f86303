#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "duohash/css.hpp"
#include "duohash/error.hpp"
#include "duohash/evaluation.hpp"
#include "small_world.hpp"

using namespace duohash;

namespace {
ModelParams identity_head(Eigen::Index d = 2) {
  ModelParams p = init_params(ModelConfig{d, {}, d}, 1);
  p.trainable.weights[0] = Matrix::Identity(d, d);
  p.trainable.biases[0].setZero();
  p.mode = Mode::eval;
  return p;
}

Matrix cols(std::initializer_list<std::pair<double, double>> pts) {
  Matrix m(2, static_cast<Eigen::Index>(pts.size()));
  Eigen::Index i = 0;
  for (auto [x, y] : pts) m.col(i++) << x, y;
  return m;
}

Vector v2(double a, double b) { return (Vector(2) << a, b).finished(); }
}  // namespace

TEST_CASE("database construction") {
  const ModelParams p = identity_head();
  CHECK(build_database(p, Matrix(2, 0), false).size() == 0);
  const Matrix r = cols({{1, 0}, {0, 1}, {1, 1}});
  const HashDatabase a = build_database(p, r, false), b = build_database(p, r, false);
  CHECK(a.hashes.embeddings() == b.hashes.embeddings());
  HashDatabase ext = build_database(p, r, false);
  const HashDatabase extra = build_database(p, cols({{-1, 0}, {0, -1}}), false);
  ext.hashes.append(extra.hashes);
  ext.tags.insert(ext.tags.end(), extra.tags.begin(), extra.tags.end());
  CHECK(ext.size() == 5);

  const LshProjector proj(2, 16, 3);
  const HashDatabase bin = build_database(p, r, true, &proj);
  CHECK(bin.kind() == HashKind::binary);
  CHECK(bin.size() == 3);
}

TEST_CASE("scan") {
  const ModelParams p = identity_head();
  const HashDatabase db = build_database(p, cols({{1, 0}, {0, 1}}), false);
  CHECK(scan(p, v2(1, 0), db, 1e-9).flagged);
  CHECK_FALSE(scan(p, v2(1, 0), db, 0.0).flagged);

  TemplateSet t;
  t.k = 1;
  t.centroids = Matrix(v2(0.5, 0));
  HashDatabase only;
  only.hashes = HashSet::continuous(Matrix(2, 0));
  add_templates(only, t);
  CHECK(only.tags == std::vector<SourceTag>{SourceTag::template_hash});
  // unit query (1,0) sits 0.5 from the template
  CHECK_FALSE(scan(p, v2(1, 0), only, 0.4).flagged);
  CHECK(scan(p, v2(1, 0), only, 0.6).flagged);

  const ScanResult r = scan(p, v2(1, 0.2), db, 2.0);
  REQUIRE(r.matches.size() == 2);
  CHECK(r.matches[0].entry == 0);
  CHECK(r.matches[0].distance <= r.matches[1].distance);
}

TEST_CASE("scan flag is invariant under database permutation") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  const ModelParams p = identity_head(4);
  Matrix refs(4, 30);
  for (Eigen::Index i = 0; i < refs.size(); ++i) refs(i) = g(rng);
  std::vector<Eigen::Index> order(30);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  Matrix shuffled(4, 30);
  for (Eigen::Index i = 0; i < 30; ++i) shuffled.col(i) = refs.col(order[static_cast<std::size_t>(i)]);
  const HashDatabase a = build_database(p, refs, false), b = build_database(p, shuffled, false);
  for (int q = 0; q < 50; ++q) {
    Vector x(4);
    for (auto& v : x) v = g(rng);
    for (double t : {0.2, 0.5, 0.8}) CHECK(scan(p, x, a, t).flagged == scan(p, x, b, t).flagged);
  }
}

TEST_CASE("reduce_templates") {
  const Matrix two = cols({{1, 0}, {0, 1}});
  const TemplateSet one = reduce_templates(two, 1, 1);
  CHECK(one.centroids(0, 0) == doctest::Approx(0.5));
  CHECK(one.centroids(1, 0) == doctest::Approx(0.5));

  const Matrix pts = cols({{1, 0}, {0, 1}, {-1, 0}, {0.3, 0.3}});
  const TemplateSet all = reduce_templates(pts, 4, 7);
  for (Eigen::Index i = 0; i < 4; ++i) {
    bool found = false;
    for (Eigen::Index c = 0; c < 4; ++c) found |= (all.centroids.col(c) - pts.col(i)).norm() < 1e-12;
    CHECK(found);
  }
  CHECK(all.inertia == doctest::Approx(0.0));
  CHECK_THROWS(reduce_templates(pts, 5, 1));
  CHECK_THROWS(reduce_templates(pts, 0, 1));

  const TemplateSet renorm = reduce_templates(two, 1, 1, true);
  CHECK(renorm.centroids.col(0).norm() == doctest::Approx(1.0));
}

TEST_CASE("k-means: deterministic per seed, inertia nonincreasing in k") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g;
  Matrix pts(3, 60);
  for (Eigen::Index i = 0; i < pts.size(); ++i) pts(i) = g(rng);
  const TemplateSet a = reduce_templates(pts, 5, 9), b = reduce_templates(pts, 5, 9);
  CHECK(a.centroids == b.centroids);
  double last = INFINITY;
  for (std::size_t k : {1, 2, 5, 10, 25, 60}) {
    const double inertia = reduce_templates(pts, k, 9).inertia;
    CHECK(inertia <= last + 1e-9);
    last = inertia;
  }
  CHECK(last == doctest::Approx(0.0));
}

TEST_CASE("forge_collision") {
  ModelParams p = init_params(ModelConfig{6, {8}, 4}, 3);
  p.mode = Mode::eval;
  const Vector x = Vector::LinSpaced(6, -1, 1);
  const Vector own = embed_one(p, x).values();

  const ForgeResult same = forge_collision(p, x, own, {100, 1.0, 0.05});
  CHECK(same.perturbation_ratio == 0.0);
  CHECK(same.best_iteration == 0);
  CHECK(same.hash_distance == doctest::Approx(0.0));

  const Vector other = embed_one(p, Vector::LinSpaced(6, 2, -3)).values();
  const ForgeResult heavy = forge_collision(p, x, other, {500, 100.0, 0.001});
  CHECK(heavy.perturbation_ratio < 0.01);

  const ForgeResult free = forge_collision(p, x, other, {2000, 1e-3, 0.05});
  CHECK(free.hash_distance < (own - other).norm());
  CHECK(free.loss_history.size() == 2001);
  CHECK(*std::min_element(free.loss_history.begin(), free.loss_history.end()) ==
        free.loss_history[free.best_iteration]);
}

TEST_CASE("select_cover picks the closest hash") {
  const ModelParams p = identity_head();
  const Matrix pool = cols({{1, 0}, {0, 1}, {-1, 0}});
  CHECK(select_cover(p, pool, v2(0.1, 0.9).normalized()) == 1);
}

TEST_CASE("fp_study") {
  const ModelParams p = identity_head();
  const Matrix refs = cols({{1, 0}, {0, 1}});
  const HashDatabase db = build_database(p, refs, false);
  CHECK(fp_study(p, refs, db, 0.1).fp_per_million == 1e6);
  CHECK(fp_study(p, refs, db, 0.0).fp_per_million == 0.0);

  const Matrix corpus = cols({{1, 0.05}, {-1, 0}, {0, -1}, {0.7, -0.7}});
  const double before = fp_study(p, corpus, db, 0.3).fp_per_million;
  HashDatabase rd = db;
  TemplateSet t;
  t.k = 1;
  t.centroids = Matrix(v2(-1, 0));
  add_templates(rd, t);
  const FpStudy after = fp_study(p, corpus, rd, 0.3);
  CHECK(after.fp_per_million - before == doctest::Approx(1e6 / 4));
  CHECK(after.flags == std::vector<bool>{true, true, false, false});
}

TEST_CASE("activation_stats") {
  ModelParams p = init_params(ModelConfig{4, {6}, 3}, 2);
  p.mode = Mode::eval;
  const Vector x = Vector::LinSpaced(4, -1, 2);
  const ActivationStats one = activation_stats(p, Matrix(x));
  CHECK((one.mean - penultimate(p, Matrix(x)).col(0)).norm() < 1e-12);
  Matrix twice(4, 2);
  twice << x, x;
  CHECK((activation_stats(p, twice).mean - one.mean).norm() < 1e-12);
  CHECK(one.clipped.maxCoeff() <= 5.0);
  CHECK_THROWS(activation_stats(p, Matrix(4, 0)));
}

TEST_CASE("evaluation studies on a small world") {
  const World w = generate_world(small_world());
  ModelParams p = init_params(ModelConfig{w.config.d_in, {}, 8, w.config.background}, 5);
  p.mode = Mode::eval;
  const IcdStudy icd = icd_study(p, w, Split::test);
  CHECK(icd.pairs.size() == w.query_test.size() * w.ref_test.size());
  CHECK(icd.mu_ap >= 0.0);
  CHECK(icd.mu_ap <= 1.0);

  const FrStudy fr = fr_study(p, w, Split::test, 0.5);
  CHECK(fr.individuals.front().is_target);
  CHECK(fr.target_values(&FrReport::recall).size() == 1);
  CHECK(fr.nontarget_values(&FrReport::recall).size() == w.nontarget_test.size());
  const FrStudy everything = fr_study(p, w, Split::test, 10.0);
  for (const auto& ind : everything.individuals) CHECK(ind.report.recall == 1.0);
}
