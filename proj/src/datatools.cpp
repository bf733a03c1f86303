#include "duohash/datatools.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "duohash/error.hpp"

namespace duohash {

FaceOracle face_oracle(std::map<std::string, std::vector<Vector>> table) {
  return [table = std::move(table)](const std::string& id) {
    auto it = table.find(id);
    if (it == table.end()) throw ConfigError("face oracle: no entry for item '" + id + "'");
    return it->second;
  };
}

ItemOracle item_oracle(std::map<std::string, Vector> table) {
  return [table = std::move(table)](const std::string& id) {
    auto it = table.find(id);
    if (it == table.end()) throw ConfigError("embedding oracle: no entry for item '" + id + "'");
    return it->second;
  };
}

std::vector<std::string> detect_mislabeled(std::vector<std::string> ids, const FaceOracle& faces, double t_mis) {
  if (!(t_mis > 0.0 && t_mis < 2.0)) throw std::invalid_argument("detect_mislabeled: T_mis must be in (0, 2)");
  std::sort(ids.begin(), ids.end());
  std::vector<std::string> excluded;
  if (ids.empty()) return excluded;

  std::vector<std::vector<Vector>> found;
  found.reserve(ids.size());
  Vector base;
  std::size_t singles = 0;
  for (const auto& id : ids) {
    found.push_back(faces(id));
    if (found.back().size() == 1) {
      const Vector unit = l2_normalize(found.back().front()).values();
      if (singles == 0) {
        base = unit;
      } else {
        base += unit;
      }
      ++singles;
    }
  }
  if (singles == 0) throw std::invalid_argument("detect_mislabeled: no single-face item, base embedding undefined");
  base /= static_cast<double>(singles);

  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (found[i].empty()) {
      excluded.push_back(ids[i]);
      continue;
    }
    double nearest = std::numeric_limits<double>::infinity();
    for (const auto& face : found[i]) nearest = std::min(nearest, cosine_distance(face, base));
    if (nearest > t_mis) excluded.push_back(ids[i]);
  }
  return excluded;
}

std::vector<std::string> detect_duplicates(std::vector<std::string> ids, const ItemOracle& embeddings, double t_dup) {
  if (!(t_dup > 0.0)) throw std::invalid_argument("detect_duplicates: T_dup must be positive");
  std::sort(ids.begin(), ids.end());
  std::vector<Vector> e;
  e.reserve(ids.size());
  for (const auto& id : ids) e.push_back(embeddings(id));

  std::vector<bool> gone(ids.size(), false);
  std::vector<std::string> excluded;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (gone[i]) continue;
    for (std::size_t j = i + 1; j < ids.size(); ++j) {
      if (!gone[j] && euclidean(e[i], e[j]) < t_dup) gone[j] = true;
    }
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (gone[i]) excluded.push_back(ids[i]);
  }
  return excluded;
}

CleaningResult clean_individual(const std::vector<std::string>& ids, const FaceOracle& faces,
                                const ItemOracle& embeddings, double t_mis, double t_dup) {
  CleaningResult result;
  result.mislabeled = detect_mislabeled(ids, faces, t_mis);
  std::vector<std::string> kept;
  for (const auto& id : ids) {
    if (!std::binary_search(result.mislabeled.begin(), result.mislabeled.end(), id)) kept.push_back(id);
  }
  result.duplicates = detect_duplicates(std::move(kept), embeddings, t_dup);
  return result;
}

namespace {

Vector gaussian(Eigen::Index dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v[i] = normal(rng);
  return v;
}

// Unit vector at the given angle from `axis` (unit), in a random direction.
Vector at_angle(const Vector& axis, double angle, std::mt19937_64& rng) {
  Vector side = gaussian(axis.size(), rng);
  side -= side.dot(axis) * axis;
  side.normalize();
  return std::cos(angle) * axis + std::sin(angle) * side;
}

}  // namespace

PlantedCorpus make_planted_corpus(const PlantedCorpusConfig& cfg) {
  const std::size_t n_clean = cfg.n_items;
  if (cfg.n_duplicates > n_clean) throw std::invalid_argument("make_planted_corpus: more duplicates than clean items");
  if (!(cfg.t_mis > 0.0 && cfg.t_mis < 1.0)) {
    throw std::invalid_argument("make_planted_corpus: planted outliers need T_mis < 1 (2x separation within [0, 2])");
  }
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  PlantedCorpus corpus;

  const Vector axis = gaussian(cfg.face_dim, rng).normalized();
  // Cosine distance 1 - cos(angle): clean faces stay within t_mis / 2 of the
  // axis, outliers beyond 2 * t_mis. The base drifts a little from the axis,
  // which the margins absorb.
  const double clean_max = std::acos(1.0 - cfg.t_mis / 4.0);
  const double outlier_min = std::acos(1.0 - std::min(2.0 * cfg.t_mis + 0.2, 1.95));
  const double pi = std::acos(-1.0);

  std::vector<Vector> originals;  // duplicate-detection embeddings of clean items
  auto fresh_item_embedding = [&]() {
    for (;;) {
      Vector v = 10.0 * gaussian(cfg.item_dim, rng);
      bool far = std::all_of(originals.begin(), originals.end(),
                             [&](const Vector& o) { return (o - v).norm() >= 4.0 * cfg.t_dup; });
      if (far) return v;
    }
  };
  auto name = [](const char* prefix, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%05zu", prefix, i);
    return std::string(buf);
  };

  std::vector<std::string> clean_ids;
  for (std::size_t i = 0; i < n_clean; ++i) {
    const std::string id = name("img", 2 * i);
    corpus.faces[id] = {at_angle(axis, clean_max * unit(rng), rng)};
    originals.push_back(fresh_item_embedding());
    corpus.embeddings[id] = originals.back();
    clean_ids.push_back(id);
  }
  for (std::size_t i = 0; i < cfg.n_multi_face; ++i) {
    const std::string id = name("grp", i);
    corpus.faces[id] = {at_angle(axis, outlier_min + (pi - outlier_min) * unit(rng), rng),
                        at_angle(axis, clean_max * unit(rng), rng)};
    originals.push_back(fresh_item_embedding());
    corpus.embeddings[id] = originals.back();
  }
  // Duplicates sort directly after their original (odd suffix) so the greedy pass keeps the original.
  std::vector<std::size_t> order(n_clean);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t k = 0; k < cfg.n_duplicates; ++k) {
    const std::size_t src = order[k];
    const std::string id = name("img", 2 * src + 1);
    corpus.faces[id] = corpus.faces[clean_ids[src]];
    corpus.embeddings[id] = originals[src] + (cfg.t_dup / 2.0) * unit(rng) * gaussian(cfg.item_dim, rng).normalized();
    corpus.duplicates.push_back(id);
  }
  for (std::size_t i = 0; i < cfg.n_mislabeled; ++i) {
    const std::string id = name("mis", i);
    corpus.faces[id] = {at_angle(axis, outlier_min + (pi - outlier_min) * unit(rng), rng)};
    corpus.embeddings[id] = fresh_item_embedding();
    originals.push_back(corpus.embeddings[id]);
    corpus.mislabeled.push_back(id);
  }
  for (std::size_t i = 0; i < cfg.n_faceless; ++i) {
    const std::string id = name("nof", i);
    corpus.faces[id] = {};
    corpus.embeddings[id] = fresh_item_embedding();
    originals.push_back(corpus.embeddings[id]);
    corpus.mislabeled.push_back(id);
  }

  for (const auto& [id, faces] : corpus.faces) corpus.ids.push_back(id);
  std::shuffle(corpus.ids.begin(), corpus.ids.end(), rng);
  std::sort(corpus.mislabeled.begin(), corpus.mislabeled.end());
  std::sort(corpus.duplicates.begin(), corpus.duplicates.end());
  return corpus;
}

void write_id_list(const std::filesystem::path& path, const std::vector<std::string>& ids) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& id : ids) out << id << '\n';
}

std::vector<std::string> read_id_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) ids.push_back(line);
  }
  return ids;
}

}  // namespace duohash
