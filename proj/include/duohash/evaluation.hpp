#pragma once

#include <cstddef>
#include <vector>

#include "duohash/css.hpp"
#include "duohash/metrics.hpp"
#include "duohash/synthgen.hpp"

namespace duohash {

enum class Split { val, test };

struct IcdStudy {
  std::vector<PairScore> pairs;  // every query x reference pair
  double mu_ap = 0.0;
};

/// Copy-detection study on the chosen split; binary hashes when a projector is given.
IcdStudy icd_study(const ModelParams& model, const World& world, Split split, const LshProjector* projector = nullptr);

struct FrIndividual {
  std::size_t identity = 0;
  bool is_target = false;
  FrReport report;
};

struct FrStudy {
  std::vector<FrIndividual> individuals;  // targets first, then non-targets in id order
  std::size_t query_count = 0;

  std::vector<double> target_values(double FrReport::*field) const;
  std::vector<double> nontarget_values(double FrReport::*field) const;
};

/// Recognition study. Each target is matched against its training images
/// with its val/test images as queries; each non-target individual of the
/// split contributes its first N^T_train images as reference and the rest as
/// queries. Every individual is scored on the union of all queries.
FrStudy fr_study(const ModelParams& model, const World& world, Split split, double threshold,
                 const LshProjector* projector = nullptr);

/// Target recognition through a scanning database: queries are the target's
/// test images plus the test non-target query images; an image counts as
/// flagged when it matches any database entry.
FrReport database_target_report(const ModelParams& model, const World& world, std::size_t target,
                                const HashDatabase& db, double threshold, const LshProjector* projector = nullptr);

}  // namespace duohash
