#include "duohash/css.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

#include "duohash/error.hpp"

namespace duohash {

HashSet HashSet::continuous(Matrix columns) {
  HashSet set;
  set.kind_ = HashKind::continuous;
  set.embeddings_ = std::move(columns);
  return set;
}

HashSet HashSet::binary(std::vector<BinaryHash> hashes) {
  HashSet set;
  set.kind_ = HashKind::binary;
  set.bits_ = std::move(hashes);
  return set;
}

std::size_t HashSet::size() const {
  return kind_ == HashKind::continuous ? static_cast<std::size_t>(embeddings_.cols()) : bits_.size();
}

double HashSet::distance(std::size_t i, const HashSet& other, std::size_t j) const {
  if (kind_ != other.kind_) throw std::invalid_argument("HashSet::distance: mixed hash kinds");
  if (kind_ == HashKind::binary) return static_cast<double>(hamming(bits_[i], other.bits_[j]));
  return euclidean(Vector(embeddings_.col(static_cast<Eigen::Index>(i))),
                   Vector(other.embeddings_.col(static_cast<Eigen::Index>(j))));
}

void HashSet::append(const HashSet& other) {
  if (size() == 0 && kind_ != other.kind_) {
    *this = other;
    return;
  }
  if (kind_ != other.kind_) throw std::invalid_argument("HashSet::append: mixed hash kinds");
  if (kind_ == HashKind::binary) {
    bits_.insert(bits_.end(), other.bits_.begin(), other.bits_.end());
    return;
  }
  if (embeddings_.cols() > 0 && other.embeddings_.rows() != embeddings_.rows()) {
    throw std::invalid_argument("HashSet::append: embedding length mismatch");
  }
  Matrix merged(other.embeddings_.rows(), embeddings_.cols() + other.embeddings_.cols());
  merged << embeddings_, other.embeddings_;
  embeddings_ = std::move(merged);
}

HashSet HashSet::subset(const std::vector<std::size_t>& indices) const {
  if (kind_ == HashKind::binary) {
    std::vector<BinaryHash> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(bits_.at(i));
    return binary(std::move(out));
  }
  Matrix out(embeddings_.rows(), static_cast<Eigen::Index>(indices.size()));
  for (std::size_t k = 0; k < indices.size(); ++k) {
    out.col(static_cast<Eigen::Index>(k)) = embeddings_.col(static_cast<Eigen::Index>(indices[k]));
  }
  return continuous(std::move(out));
}

HashSet hash_items(const ModelParams& model, const Matrix& inputs, const LshProjector* projector) {
  Matrix embeddings = embed(model, inputs);
  if (!projector) return HashSet::continuous(std::move(embeddings));
  std::vector<BinaryHash> bits;
  bits.reserve(static_cast<std::size_t>(embeddings.cols()));
  for (Eigen::Index c = 0; c < embeddings.cols(); ++c) bits.push_back(lsh_binarize(*projector, Vector(embeddings.col(c))));
  return HashSet::binary(std::move(bits));
}

std::vector<double> min_distances(const HashSet& queries, const HashSet& refs) {
  if (queries.kind() != refs.kind() && refs.size() > 0) throw std::invalid_argument("min_distances: mixed hash kinds");
  std::vector<double> out(queries.size(), std::numeric_limits<double>::infinity());
  if (refs.size() == 0) return out;
  if (queries.kind() == HashKind::binary) {
    for (std::size_t q = 0; q < queries.size(); ++q) {
      std::size_t best = std::numeric_limits<std::size_t>::max();
      for (const auto& r : refs.bits()) best = std::min(best, hamming(queries.bits()[q], r));
      out[q] = static_cast<double>(best);
    }
    return out;
  }
  const Matrix& Q = queries.embeddings();
  const Matrix& R = refs.embeddings();
  if (Q.rows() != R.rows()) throw std::invalid_argument("min_distances: embedding length mismatch");
  for (Eigen::Index q = 0; q < Q.cols(); ++q) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index r = 0; r < R.cols(); ++r) best = std::min(best, (Q.col(q) - R.col(r)).squaredNorm());
    out[static_cast<std::size_t>(q)] = std::sqrt(best);
  }
  return out;
}

HashDatabase build_database(const ModelParams& model, const Matrix& items, bool use_lsh, const LshProjector* projector) {
  if (use_lsh && !projector) throw std::invalid_argument("build_database: LSH requested without a projector");
  HashDatabase db;
  db.hashes = items.cols() == 0 ? (use_lsh ? HashSet::binary({}) : HashSet::continuous(Matrix(model.config.output_dim, 0)))
                                : hash_items(model, items, use_lsh ? projector : nullptr);
  db.tags.assign(db.hashes.size(), SourceTag::reference);
  return db;
}

void add_templates(HashDatabase& db, const TemplateSet& templates, const LshProjector* projector) {
  if (db.kind() == HashKind::binary) {
    if (!projector) throw std::invalid_argument("add_templates: binary database needs the LSH projector");
    std::vector<BinaryHash> bits;
    for (Eigen::Index c = 0; c < templates.centroids.cols(); ++c) {
      bits.push_back(lsh_binarize(*projector, Vector(templates.centroids.col(c))));
    }
    db.hashes.append(HashSet::binary(std::move(bits)));
  } else {
    db.hashes.append(HashSet::continuous(templates.centroids));
  }
  db.tags.insert(db.tags.end(), static_cast<std::size_t>(templates.centroids.cols()), SourceTag::template_hash);
}

ScanResult scan(const HashDatabase& db, const HashSet& queries, std::size_t query, double threshold) {
  ScanResult result;
  for (std::size_t e = 0; e < db.size(); ++e) {
    const double d = queries.distance(query, db.hashes, e);
    if (d < threshold) result.matches.push_back(Match{e, d});
  }
  std::sort(result.matches.begin(), result.matches.end(), [](const Match& a, const Match& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.entry < b.entry;
  });
  result.flagged = !result.matches.empty();
  return result;
}

ScanResult scan(const ModelParams& model, const Vector& item, const HashDatabase& db, double threshold,
                const LshProjector* projector) {
  if (db.size() == 0) return {};
  if ((db.kind() == HashKind::binary) != (projector != nullptr)) {
    throw std::invalid_argument("scan: query hash kind does not match the database");
  }
  const Matrix column = item;
  return scan(db, hash_items(model, column, projector), 0, threshold);
}

double kmeans_inertia(const Matrix& points, const Matrix& centroids) {
  double total = 0.0;
  for (Eigen::Index p = 0; p < points.cols(); ++p) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < centroids.cols(); ++c) best = std::min(best, (points.col(p) - centroids.col(c)).squaredNorm());
    total += best;
  }
  return total;
}

TemplateSet reduce_templates(const Matrix& embeddings, std::size_t k, std::uint64_t seed, bool renormalize) {
  const auto n = static_cast<std::size_t>(embeddings.cols());
  if (k < 1 || k > n) {
    throw std::invalid_argument("reduce_templates: k=" + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
  }
  const Eigen::Index dim = embeddings.rows();
  std::mt19937_64 rng(seed);

  // k-means++ seeding.
  Matrix centroids(dim, static_cast<Eigen::Index>(k));
  std::vector<bool> chosen(n, false);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::size_t first = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  centroids.col(0) = embeddings.col(static_cast<Eigen::Index>(first));
  chosen[first] = true;
  for (std::size_t c = 1; c < k; ++c) {
    const auto prev = centroids.col(static_cast<Eigen::Index>(c - 1));
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (embeddings.col(static_cast<Eigen::Index>(i)) - prev).squaredNorm());
      if (!chosen[i]) total += d2[i];
    }
    std::size_t pick = n;
    if (total > 0.0) {
      double u = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (std::size_t i = 0; i < n; ++i) {
        if (chosen[i] || d2[i] <= 0.0) continue;
        pick = i;
        u -= d2[i];
        if (u < 0.0) break;
      }
    }
    if (pick == n) {
      // Remaining points coincide with chosen centroids; take any unchosen one.
      std::vector<std::size_t> free;
      for (std::size_t i = 0; i < n; ++i) {
        if (!chosen[i]) free.push_back(i);
      }
      pick = free[std::uniform_int_distribution<std::size_t>(0, free.size() - 1)(rng)];
    }
    chosen[pick] = true;
    centroids.col(static_cast<Eigen::Index>(c)) = embeddings.col(static_cast<Eigen::Index>(pick));
  }

  // Lloyd iterations.
  constexpr int kMaxIterations = 100;
  std::vector<std::size_t> assignment(n, k);
  int iterations = 0;
  for (; iterations < kMaxIterations; ++iterations) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = (embeddings.col(static_cast<Eigen::Index>(i)) - centroids.col(static_cast<Eigen::Index>(c))).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (assignment[i] != best) {
        assignment[i] = best;
        changed = true;
      }
    }
    if (!changed) break;
    Matrix sums = Matrix::Zero(dim, static_cast<Eigen::Index>(k));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums.col(static_cast<Eigen::Index>(assignment[i])) += embeddings.col(static_cast<Eigen::Index>(i));
      ++counts[assignment[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      // An emptied cluster keeps its previous centroid.
      if (counts[c] > 0) centroids.col(static_cast<Eigen::Index>(c)) = sums.col(static_cast<Eigen::Index>(c)) / static_cast<double>(counts[c]);
    }
  }

  TemplateSet out;
  out.k = k;
  out.iterations = iterations;
  out.inertia = kmeans_inertia(embeddings, centroids);
  if (renormalize) {
    for (Eigen::Index c = 0; c < centroids.cols(); ++c) centroids.col(c) = l2_normalize(centroids.col(c)).values();
  }
  out.centroids = std::move(centroids);
  return out;
}

ForgeResult forge_collision(const ModelParams& model, const Vector& cover, const Vector& template_hash,
                            const ForgeOptions& options) {
  if (template_hash.size() != model.config.output_dim) {
    throw std::invalid_argument("forge_collision: template hash length differs from the model output");
  }
  if (options.iterations < 0 || !(options.lambda_vis >= 0.0) || !(options.step > 0.0)) {
    throw std::invalid_argument("forge_collision: invalid options");
  }
  const double cover_norm = cover.norm();
  if (!(cover_norm > 0.0)) throw std::invalid_argument("forge_collision: zero cover item");

  ModelParams frozen = model;
  frozen.mode = Mode::eval;

  ForgeResult result;
  Vector relative = Vector::Zero(cover.size());  // delta / ||x||
  Vector best_relative = relative;
  double best_loss = std::numeric_limits<double>::infinity();
  ForwardCache cache;

  for (int it = 0; it <= options.iterations; ++it) {
    const Matrix input = cover + cover_norm * relative;
    const Matrix hash = forward(frozen, input, &cache);
    const Vector diff = hash.col(0) - template_hash;
    const double loss = diff.squaredNorm() + options.lambda_vis * relative.squaredNorm();
    if (!std::isfinite(loss)) {
      throw NumericalFailure("forge_collision: non-finite loss at iteration " + std::to_string(it) +
                             " (perturbation ratio " + std::to_string(relative.norm()) + ")");
    }
    result.loss_history.push_back(loss);
    if (loss < best_loss) {
      best_loss = loss;
      best_relative = relative;
      result.best_iteration = static_cast<std::size_t>(it);
    }
    if (it == options.iterations) break;
    const BackwardResult back = backward(frozen, cache, 2.0 * diff);
    const Vector grad = cover_norm * back.input_grads.col(0) + 2.0 * options.lambda_vis * relative;
    relative -= options.step * grad;
  }

  result.forged = cover + cover_norm * best_relative;
  result.perturbation_ratio = best_relative.norm();
  result.hash_distance = (embed_one(frozen, result.forged).values() - template_hash).norm();
  return result;
}

std::size_t select_cover(const ModelParams& model, const Matrix& pool, const Vector& template_hash) {
  if (pool.cols() == 0) throw std::invalid_argument("select_cover: empty pool");
  const Matrix hashes = embed(model, pool);
  Eigen::Index best = 0;
  (hashes.colwise() - template_hash).colwise().squaredNorm().minCoeff(&best);
  return static_cast<std::size_t>(best);
}

FpStudy fp_study(const ModelParams& model, const Matrix& corpus, const HashDatabase& db, double threshold,
                 const LshProjector* projector) {
  if (corpus.cols() == 0) throw std::invalid_argument("fp_study: empty corpus");
  const HashSet queries = hash_items(model, corpus, projector);
  const auto nearest = min_distances(queries, db.hashes);
  FpStudy study;
  study.flags.reserve(nearest.size());
  std::size_t flagged = 0;
  for (double d : nearest) {
    const bool f = d < threshold;
    study.flags.push_back(f);
    flagged += f;
  }
  study.fp_per_million = static_cast<double>(flagged) / static_cast<double>(nearest.size()) * 1e6;
  return study;
}

ActivationStats activation_stats(const ModelParams& model, const Matrix& items) {
  if (items.cols() == 0) throw std::invalid_argument("activation_stats: empty item list");
  const Matrix acts = penultimate(model, items);
  ActivationStats stats;
  stats.mean = acts.rowwise().mean();
  stats.clipped = stats.mean.cwiseMin(5.0);
  return stats;
}

}  // namespace duohash
