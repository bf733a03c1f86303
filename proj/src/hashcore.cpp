#include "duohash/hashcore.hpp"

#include <bit>
#include <cmath>
#include <random>
#include <stdexcept>

namespace duohash {

namespace {

constexpr std::size_t kWordBits = 64;

std::size_t word_count(std::size_t bits) { return (bits + kWordBits - 1) / kWordBits; }

void require_same_length(Eigen::Index a, Eigen::Index b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": length mismatch (" + std::to_string(a) +
                                " vs " + std::to_string(b) + ")");
  }
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

BinaryHash::BinaryHash(std::size_t bit_count) : bit_count_(bit_count), words_(word_count(bit_count), 0) {}

bool BinaryHash::bit(std::size_t j) const {
  if (j >= bit_count_) throw std::out_of_range("BinaryHash::bit: index out of range");
  return (words_[j / kWordBits] >> (j % kWordBits)) & 1u;
}

void BinaryHash::set_bit(std::size_t j, bool value) {
  if (j >= bit_count_) throw std::out_of_range("BinaryHash::set_bit: index out of range");
  const std::uint64_t mask = std::uint64_t{1} << (j % kWordBits);
  if (value) {
    words_[j / kWordBits] |= mask;
  } else {
    words_[j / kWordBits] &= ~mask;
  }
}

std::string BinaryHash::to_hex() const {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve((bit_count_ + 3) / 4);
  for (std::size_t nibble = 0; nibble * 4 < bit_count_; ++nibble) {
    int value = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      const std::size_t j = nibble * 4 + k;
      value = (value << 1) | (j < bit_count_ && bit(j) ? 1 : 0);
    }
    out.push_back(kDigits[value]);
  }
  return out;
}

BinaryHash BinaryHash::from_hex(std::string_view hex, std::size_t bit_count) {
  if (hex.size() != (bit_count + 3) / 4) {
    throw std::invalid_argument("BinaryHash::from_hex: expected " + std::to_string((bit_count + 3) / 4) +
                                " hex digits, got " + std::to_string(hex.size()));
  }
  BinaryHash hash(bit_count);
  for (std::size_t nibble = 0; nibble < hex.size(); ++nibble) {
    const int value = hex_value(hex[nibble]);
    if (value < 0) throw std::invalid_argument("BinaryHash::from_hex: invalid hex digit");
    for (std::size_t k = 0; k < 4; ++k) {
      const std::size_t j = nibble * 4 + k;
      const bool set = (value >> (3 - k)) & 1;
      if (j < bit_count) {
        hash.set_bit(j, set);
      } else if (set) {
        throw std::invalid_argument("BinaryHash::from_hex: padding bits must be zero");
      }
    }
  }
  return hash;
}

LshProjector::LshProjector(Eigen::Index input_dim, Eigen::Index bit_count, std::uint64_t seed)
    : matrix_(bit_count, input_dim), seed_(seed) {
  if (input_dim <= 0 || bit_count <= 0) throw std::invalid_argument("LshProjector: dimensions must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  // Row-major fill so the matrix does not depend on Eigen's storage order.
  for (Eigen::Index r = 0; r < bit_count; ++r) {
    for (Eigen::Index c = 0; c < input_dim; ++c) matrix_(r, c) = normal(rng);
  }
}

Embedding l2_normalize(const Vector& v) {
  const double norm = v.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw std::domain_error("l2_normalize: degenerate embedding (zero or non-finite norm)");
  }
  return Embedding(v / norm);
}

double euclidean(const Vector& a, const Vector& b) {
  require_same_length(a.size(), b.size(), "euclidean");
  return (a - b).norm();
}

double euclidean(const Embedding& a, const Embedding& b) { return euclidean(a.values(), b.values()); }

std::size_t hamming(const BinaryHash& a, const BinaryHash& b) {
  require_same_length(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()), "hamming");
  std::size_t count = 0;
  for (std::size_t w = 0; w < a.words_.size(); ++w) count += std::popcount(a.words_[w] ^ b.words_[w]);
  return count;
}

double cosine_distance(const Vector& a, const Vector& b) {
  require_same_length(a.size(), b.size(), "cosine_distance");
  const double na = a.norm();
  const double nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) throw std::domain_error("cosine_distance: zero vector");
  return 1.0 - a.dot(b) / (na * nb);
}

BinaryHash lsh_binarize(const LshProjector& projector, const Vector& e) {
  if (projector.input_dim() != e.size()) {
    throw std::invalid_argument("lsh_binarize: projector expects length " + std::to_string(projector.input_dim()) +
                                ", got " + std::to_string(e.size()));
  }
  const Vector projected = projector.matrix() * e;
  BinaryHash hash(static_cast<std::size_t>(projected.size()));
  for (Eigen::Index j = 0; j < projected.size(); ++j) hash.set_bit(static_cast<std::size_t>(j), projected[j] >= 0.0);
  return hash;
}

}  // namespace duohash
