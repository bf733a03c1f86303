#include <doctest.h>

#include <random>

#include "duohash/hashcore.hpp"

using namespace duohash;

namespace {
Vector v2(double a, double b) { return (Vector(2) << a, b).finished(); }

BinaryHash bits(const char* s) {
  const std::string str(s);
  BinaryHash h(str.size());
  for (std::size_t i = 0; i < str.size(); ++i) h.set_bit(i, str[i] == '1');
  return h;
}
}  // namespace

TEST_CASE("l2_normalize") {
  const Embedding e = l2_normalize(v2(3, 4));
  CHECK(e[0] == doctest::Approx(0.6));
  CHECK(e[1] == doctest::Approx(0.8));
  CHECK(l2_normalize(v2(1, 0)) == Embedding(v2(1, 0)));
  CHECK_THROWS(l2_normalize(v2(0, 0)));
}

TEST_CASE("euclidean") {
  CHECK(euclidean(v2(1, 0), v2(0, 1)) == doctest::Approx(1.41421356));
  CHECK(euclidean(v2(0.3, 0.2), v2(0.3, 0.2)) == 0.0);
  CHECK(euclidean(v2(1, 0), v2(0.8, 0.6)) == doctest::Approx(0.632456).epsilon(1e-6));
  CHECK_THROWS(euclidean(v2(1, 0), Vector::Zero(3)));
}

TEST_CASE("hamming") {
  CHECK(hamming(bits("1010"), bits("0110")) == 2);
  CHECK(hamming(bits("1010"), bits("1010")) == 0);
  CHECK(hamming(bits("1111"), bits("0000")) == 4);
  CHECK_THROWS(hamming(bits("1"), bits("10")));
}

TEST_CASE("cosine_distance") {
  CHECK(cosine_distance(v2(1, 0), v2(1, 0)) == doctest::Approx(0.0));
  CHECK(cosine_distance(v2(1, 0), v2(0, 1)) == doctest::Approx(1.0));
  CHECK(cosine_distance(v2(1, 0), v2(-1, 0)) == doctest::Approx(2.0));
  CHECK_THROWS(cosine_distance(v2(0, 0), v2(1, 0)));
}

TEST_CASE("lsh_binarize with hand-built projectors") {
  Matrix rows(2, 2);
  rows << 1, 0, 0, 1;
  CHECK(lsh_binarize(LshProjector(rows), v2(0.6, 0.8)) == bits("11"));
  rows << 1, 0, 0, -1;
  CHECK(lsh_binarize(LshProjector(rows), v2(0.6, 0.8)) == bits("10"));
}

TEST_CASE("lsh_binarize frozen regression: seed 7, l 4, 8 bits") {
  const LshProjector p(4, 8, 7);
  const Vector e = (Vector(4) << 1, 0, 0, 0).finished();
  CHECK(lsh_binarize(p, e).to_hex() == "86");
}

TEST_CASE("lsh_binarize: determinism and sign flip") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  const LshProjector a(16, 64, 11), b(16, 64, 11);
  CHECK(a.matrix() == b.matrix());
  for (int trial = 0; trial < 20; ++trial) {
    Vector e(16);
    for (auto& x : e) x = g(rng);
    const BinaryHash h = lsh_binarize(a, e), n = lsh_binarize(a, Vector(-e));
    CHECK(h == lsh_binarize(b, e));
    const Vector proj = a.matrix() * e;
    for (std::size_t j = 0; j < 64; ++j) {
      if (proj[static_cast<Eigen::Index>(j)] != 0.0) CHECK(h.bit(j) != n.bit(j));
    }
  }
}

TEST_CASE("hex round trip") {
  const BinaryHash h = bits("1011001110");
  CHECK(BinaryHash::from_hex(h.to_hex(), 10) == h);
  CHECK_THROWS(BinaryHash::from_hex("zz", 8));
}

TEST_CASE("triangle inequality on random triples") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  std::bernoulli_distribution coin;
  for (int t = 0; t < 200; ++t) {
    Vector a(8), b(8), c(8);
    for (int i = 0; i < 8; ++i) a[i] = g(rng), b[i] = g(rng), c[i] = g(rng);
    CHECK(euclidean(a, c) <= euclidean(a, b) + euclidean(b, c) + 1e-12);
    BinaryHash x(37), y(37), z(37);
    for (std::size_t i = 0; i < 37; ++i) x.set_bit(i, coin(rng)), y.set_bit(i, coin(rng)), z.set_bit(i, coin(rng));
    CHECK(hamming(x, z) <= hamming(x, y) + hamming(y, z));
    CHECK(hamming(x, y) == hamming(y, x));
  }
}
