#include "duohash/evaluation.hpp"

#include <algorithm>
#include <stdexcept>

namespace duohash {

namespace {

struct FrLayout {
  std::vector<std::size_t> queries;           // item indices
  std::vector<std::size_t> query_owner;       // identity per query
  std::vector<std::size_t> individuals;       // identity ids
  std::vector<bool> individual_is_target;
  std::vector<std::vector<std::size_t>> refs;  // per individual, item indices
};

FrLayout fr_layout(const World& world, Split split) {
  FrLayout layout;
  const std::size_t n_ref = world.config.n_target_train;
  for (const auto& t : world.targets) {
    layout.individuals.push_back(t.identity);
    layout.individual_is_target.push_back(true);
    layout.refs.push_back(t.train);
    for (auto q : split == Split::val ? t.val : t.test) {
      layout.queries.push_back(q);
      layout.query_owner.push_back(t.identity);
    }
  }
  for (auto id : split == Split::val ? world.nontarget_val : world.nontarget_test) {
    const auto& images = world.identity_images.at(id);
    if (images.size() <= n_ref) throw std::invalid_argument("fr_study: identity has no query images");
    layout.individuals.push_back(id);
    layout.individual_is_target.push_back(false);
    layout.refs.emplace_back(images.begin(), images.begin() + static_cast<std::ptrdiff_t>(n_ref));
    for (auto it = images.begin() + static_cast<std::ptrdiff_t>(n_ref); it != images.end(); ++it) {
      layout.queries.push_back(*it);
      layout.query_owner.push_back(id);
    }
  }
  return layout;
}

}  // namespace

IcdStudy icd_study(const ModelParams& model, const World& world, Split split, const LshProjector* projector) {
  const auto& refs = split == Split::val ? world.ref_val : world.ref_test;
  const auto& queries = split == Split::val ? world.query_val : world.query_test;
  const HashSet ref_hashes = hash_items(model, world.gather(refs), projector);
  const HashSet query_hashes = hash_items(model, world.gather(queries), projector);

  IcdStudy study;
  study.pairs.reserve(refs.size() * queries.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const auto& match = world.items[queries[q]].match_ref;
    for (std::size_t r = 0; r < refs.size(); ++r) {
      study.pairs.push_back(PairScore{queries[q], refs[r], query_hashes.distance(q, ref_hashes, r),
                                      match.has_value() && *match == refs[r]});
    }
  }
  study.mu_ap = micro_average_precision(study.pairs);
  return study;
}

std::vector<double> FrStudy::target_values(double FrReport::*field) const {
  std::vector<double> out;
  for (const auto& i : individuals) {
    if (i.is_target) out.push_back(i.report.*field);
  }
  return out;
}

std::vector<double> FrStudy::nontarget_values(double FrReport::*field) const {
  std::vector<double> out;
  for (const auto& i : individuals) {
    if (!i.is_target) out.push_back(i.report.*field);
  }
  return out;
}

FrStudy fr_study(const ModelParams& model, const World& world, Split split, double threshold,
                 const LshProjector* projector) {
  const FrLayout layout = fr_layout(world, split);
  const HashSet query_hashes = hash_items(model, world.gather(layout.queries), projector);

  FrStudy study;
  study.query_count = layout.queries.size();
  std::vector<QueryFlag> flags(layout.queries.size());
  for (std::size_t k = 0; k < layout.individuals.size(); ++k) {
    const HashSet ref_hashes = hash_items(model, world.gather(layout.refs[k]), projector);
    const auto nearest = min_distances(query_hashes, ref_hashes);
    for (std::size_t q = 0; q < flags.size(); ++q) {
      flags[q] = QueryFlag{layout.query_owner[q] == layout.individuals[k], nearest[q] < threshold};
    }
    study.individuals.push_back(FrIndividual{layout.individuals[k], layout.individual_is_target[k], fr_metrics(flags)});
  }
  return study;
}

FrReport database_target_report(const ModelParams& model, const World& world, std::size_t target,
                                const HashDatabase& db, double threshold, const LshProjector* projector) {
  const auto& split = world.targets.at(target);
  std::vector<std::size_t> queries = split.test;
  const std::size_t n_target = queries.size();
  const FrLayout layout = fr_layout(world, Split::test);
  for (std::size_t q = 0; q < layout.queries.size(); ++q) {
    const bool other_target = std::any_of(world.targets.begin(), world.targets.end(),
                                          [&](const TargetSplit& t) { return t.identity == layout.query_owner[q]; });
    if (!other_target) queries.push_back(layout.queries[q]);
  }
  const auto nearest = min_distances(hash_items(model, world.gather(queries), projector), db.hashes);
  std::vector<QueryFlag> flags(queries.size());
  for (std::size_t q = 0; q < queries.size(); ++q) flags[q] = QueryFlag{q < n_target, nearest[q] < threshold};
  return fr_metrics(flags);
}

}  // namespace duohash
