#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace duohash {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Continuous hash of length l. Model outputs are unit norm; template
/// centroids stored in the same type are not.
class Embedding {
 public:
  Embedding() = default;
  explicit Embedding(Vector values) : values_(std::move(values)) {}

  const Vector& values() const { return values_; }
  Eigen::Index size() const { return values_.size(); }
  double operator[](Eigen::Index i) const { return values_[i]; }

  friend bool operator==(const Embedding& a, const Embedding& b) {
    return a.values_.size() == b.values_.size() && a.values_ == b.values_;
  }

 private:
  Vector values_;
};

/// Fixed-length bit vector. Bit 0 is the most significant bit of the hex form.
class BinaryHash {
 public:
  BinaryHash() = default;
  explicit BinaryHash(std::size_t bit_count);

  std::size_t size() const { return bit_count_; }
  bool bit(std::size_t j) const;
  void set_bit(std::size_t j, bool value);

  std::string to_hex() const;
  static BinaryHash from_hex(std::string_view hex, std::size_t bit_count);

  friend bool operator==(const BinaryHash&, const BinaryHash&) = default;

 private:
  friend std::size_t hamming(const BinaryHash& a, const BinaryHash& b);

  std::size_t bit_count_ = 0;
  std::vector<std::uint64_t> words_;
};

/// Gaussian random projection used for LSH binarization.
class LshProjector {
 public:
  LshProjector(Eigen::Index input_dim, Eigen::Index bit_count, std::uint64_t seed);
  explicit LshProjector(Matrix projection, std::uint64_t seed = 0)
      : matrix_(std::move(projection)), seed_(seed) {}

  const Matrix& matrix() const { return matrix_; }
  std::uint64_t seed() const { return seed_; }
  Eigen::Index input_dim() const { return matrix_.cols(); }
  Eigen::Index bit_count() const { return matrix_.rows(); }

 private:
  Matrix matrix_;
  std::uint64_t seed_ = 0;
};

Embedding l2_normalize(const Vector& v);

double euclidean(const Embedding& a, const Embedding& b);
double euclidean(const Vector& a, const Vector& b);
std::size_t hamming(const BinaryHash& a, const BinaryHash& b);
double cosine_distance(const Vector& a, const Vector& b);

/// Bit j is set iff row j of the projection has a nonnegative dot product with e.
BinaryHash lsh_binarize(const LshProjector& projector, const Vector& e);
inline BinaryHash lsh_binarize(const LshProjector& projector, const Embedding& e) {
  return lsh_binarize(projector, e.values());
}

}  // namespace duohash
