#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "duohash/embedmodel.hpp"
#include "duohash/hashcore.hpp"

namespace duohash {

enum class HashKind { continuous, binary };

/// Homogeneous list of hashes: continuous embeddings (one per column) or
/// LSH bit vectors. Euclidean distance for the former, Hamming for the latter.
class HashSet {
 public:
  HashSet() = default;
  static HashSet continuous(Matrix columns);
  static HashSet binary(std::vector<BinaryHash> hashes);

  HashKind kind() const { return kind_; }
  std::size_t size() const;
  double distance(std::size_t i, const HashSet& other, std::size_t j) const;

  const Matrix& embeddings() const { return embeddings_; }
  const std::vector<BinaryHash>& bits() const { return bits_; }

  void append(const HashSet& other);
  HashSet subset(const std::vector<std::size_t>& indices) const;

 private:
  HashKind kind_ = HashKind::continuous;
  Matrix embeddings_;
  std::vector<BinaryHash> bits_;
};

/// Eval-mode hashes of the input columns; binarized when a projector is given.
HashSet hash_items(const ModelParams& model, const Matrix& inputs, const LshProjector* projector = nullptr);

/// Smallest distance from each query to any entry of `refs` (+inf if empty).
std::vector<double> min_distances(const HashSet& queries, const HashSet& refs);

enum class SourceTag { reference, template_hash };

struct HashDatabase {
  HashSet hashes;
  std::vector<SourceTag> tags;

  std::size_t size() const { return tags.size(); }
  HashKind kind() const { return hashes.kind(); }
};

struct TemplateSet {
  std::size_t k = 0;
  Matrix centroids;  // l x k, not renormalized unless requested
  double inertia = 0.0;
  int iterations = 0;
};

HashDatabase build_database(const ModelParams& model, const Matrix& items, bool use_lsh,
                            const LshProjector* projector = nullptr);
/// Appends template hashes (binarized when the database is binary).
void add_templates(HashDatabase& db, const TemplateSet& templates, const LshProjector* projector = nullptr);

struct Match {
  std::size_t entry = 0;
  double distance = 0.0;
};

struct ScanResult {
  bool flagged = false;
  std::vector<Match> matches;  // entries closer than the threshold, ascending
};

ScanResult scan(const HashDatabase& db, const HashSet& queries, std::size_t query, double threshold);
ScanResult scan(const ModelParams& model, const Vector& item, const HashDatabase& db, double threshold,
                const LshProjector* projector = nullptr);

/// k-means (k-means++ seeding, at most 100 Lloyd iterations) over the columns.
TemplateSet reduce_templates(const Matrix& embeddings, std::size_t k, std::uint64_t seed, bool renormalize = false);

/// Sum of squared distances from each column to its nearest centroid.
double kmeans_inertia(const Matrix& points, const Matrix& centroids);

struct ForgeOptions {
  int iterations = 5000;
  double lambda_vis = 1.0;
  double step = 0.05;  // gradient step on the relative perturbation delta / ||x||
};

struct ForgeResult {
  Vector forged;
  double hash_distance = 0.0;
  double perturbation_ratio = 0.0;  // ||delta|| / ||x||
  std::vector<double> loss_history;  // loss at every iterate, starting with delta = 0
  std::size_t best_iteration = 0;
};

/// Gradient descent on ||H(x + delta) - h_t||^2 + lambda_vis ||delta||^2 / ||x||^2.
/// Returns the iterate with the lowest recorded loss.
ForgeResult forge_collision(const ModelParams& model, const Vector& cover, const Vector& template_hash,
                            const ForgeOptions& options = {});

/// Index of the pool column whose hash is closest to the template.
std::size_t select_cover(const ModelParams& model, const Matrix& pool, const Vector& template_hash);

struct FpStudy {
  double fp_per_million = 0.0;
  std::vector<bool> flags;
};

/// Every corpus item is benign, so every flag is a false positive.
FpStudy fp_study(const ModelParams& model, const Matrix& corpus, const HashDatabase& db, double threshold,
                 const LshProjector* projector = nullptr);

struct ActivationStats {
  Vector mean;
  Vector clipped;  // mean clipped at 5 for heatmap display
};

ActivationStats activation_stats(const ModelParams& model, const Matrix& items);

}  // namespace duohash
