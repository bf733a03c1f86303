#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "duohash/hashcore.hpp"

namespace duohash {

/// Face detection + recognition stand-in: zero or more face embeddings per item.
using FaceOracle = std::function<std::vector<Vector>(const std::string& id)>;
/// One embedding per item (duplicate detection). Throws for unknown ids.
using ItemOracle = std::function<Vector(const std::string& id)>;

FaceOracle face_oracle(std::map<std::string, std::vector<Vector>> table);
ItemOracle item_oracle(std::map<std::string, Vector> table);

/// Items of one individual whose faces all sit farther than t_mis (cosine
/// distance) from the base embedding, plus items without a face. The base is
/// the plain mean of the normalized single-face embeddings. Sorted by id.
std::vector<std::string> detect_mislabeled(std::vector<std::string> ids, const FaceOracle& faces, double t_mis = 0.6);

/// Greedy pass in id order: each kept item excludes every later item closer
/// than t_dup. Returns the excluded ids, sorted.
std::vector<std::string> detect_duplicates(std::vector<std::string> ids, const ItemOracle& embeddings, double t_dup = 1.0);

struct CleaningResult {
  std::vector<std::string> mislabeled;
  std::vector<std::string> duplicates;  // found among the items that passed the mislabel filter
};

/// Mislabel filtering, then deduplication of the survivors.
CleaningResult clean_individual(const std::vector<std::string>& ids, const FaceOracle& faces,
                                const ItemOracle& embeddings, double t_mis = 0.6, double t_dup = 1.0);

struct PlantedCorpusConfig {
  std::size_t n_items = 200;
  std::size_t n_mislabeled = 10;  // single face far from the individual
  std::size_t n_faceless = 4;
  std::size_t n_multi_face = 6;   // one matching face among strangers
  std::size_t n_duplicates = 12;  // near-copies of correctly labeled items
  Eigen::Index face_dim = 16;
  Eigen::Index item_dim = 16;
  double t_mis = 0.6;
  double t_dup = 1.0;
  std::uint64_t seed = 1;
};

/// Corpus with known mislabeled and duplicate items, separated from the
/// thresholds by at least a factor of two.
struct PlantedCorpus {
  std::vector<std::string> ids;  // shuffled
  std::map<std::string, std::vector<Vector>> faces;
  std::map<std::string, Vector> embeddings;
  std::vector<std::string> mislabeled;  // truth, sorted (faceless items included)
  std::vector<std::string> duplicates;  // truth, sorted
};

PlantedCorpus make_planted_corpus(const PlantedCorpusConfig& config);

void write_id_list(const std::filesystem::path& path, const std::vector<std::string>& ids);
std::vector<std::string> read_id_list(const std::filesystem::path& path);

}  // namespace duohash
