#pragma once

// Independent reference implementations used by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include "duohash/embedmodel.hpp"
#include "duohash/metrics.hpp"
#include "duohash/trainer.hpp"
#include "duohash/xbmloss.hpp"

namespace oracle {

using namespace duohash;

// O(n^2) average precision: every true pair contributes the precision of the
// prefix that ends at it, in (distance, query, ref) order.
inline double brute_force_ap(const std::vector<PairScore>& pairs) {
  auto before_or_same = [](const PairScore& a, const PairScore& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    if (a.query_id != b.query_id) return a.query_id < b.query_id;
    return a.ref_id <= b.ref_id;
  };
  double total_true = 0;
  for (const auto& p : pairs) total_true += p.is_true_match;
  if (total_true == 0) return 0.0;
  double sum = 0.0;
  for (const auto& t : pairs) {
    if (!t.is_true_match) continue;
    double rank = 0, hits = 0;
    for (const auto& p : pairs) {
      if (before_or_same(p, t)) {
        ++rank;
        hits += p.is_true_match;
      }
    }
    sum += hits / rank;
  }
  return sum / total_true;
}

inline std::vector<PairScore> random_pairs(std::mt19937_64& rng, int max_queries, int max_refs) {
  std::uniform_int_distribution<int> nq(1, max_queries), nr(1, max_refs);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  const int q = nq(rng), r = nr(rng);
  std::bernoulli_distribution truth(std::uniform_real_distribution<double>(0.01, 0.3)(rng));
  std::vector<PairScore> pairs;
  for (int i = 0; i < q; ++i) {
    for (int j = 0; j < r; ++j) {
      const bool t = truth(rng);
      pairs.push_back({static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j), u(rng) + (t ? 0.0 : 0.3), t});
    }
  }
  if (std::none_of(pairs.begin(), pairs.end(), [](const PairScore& p) { return p.is_true_match; })) {
    pairs.front().is_true_match = true;
  }
  std::shuffle(pairs.begin(), pairs.end(), rng);
  return pairs;
}

struct GradCheck {
  double max_rel_error = 0.0;
  Eigen::Index parameters = 0;
  Eigen::Index skipped = 0;  // stencils that crossed a kink
};

// Relative error with an absolute floor so entries that are zero up to
// rounding do not dominate.
inline double relative_error(double a, double b, double floor = 1e-4) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Mixed loss (1-w) L_primary + w L_secondary on a random small model. The
// analytic side runs the training-mode forward for the primary views and the
// frozen-statistics forward for the secondary views, both through one shared
// memory. The numeric side perturbs one parameter at a time and re-embeds the
// views with the running statistics and memory contents of the analytic pass,
// which are constants of the gradient.
// Returns nullopt for an ill-conditioned draw: two stored embeddings closer
// than 0.01. Dead ReLU layers can even map distinct views onto one point, and
// the distance norm has a kink at zero (curvature ~ 1/d nearby) that no
// difference quotient resolves.
inline std::optional<GradCheck> try_mixed_loss_gradient(std::mt19937_64& rng, double step) {
  std::uniform_int_distribution<int> dim(2, 16), out(2, 8), width(2, 8), depth(0, 2), items(2, 4), classes(1, 3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  ModelConfig cfg;
  cfg.input_dim = dim(rng);
  cfg.output_dim = out(rng);
  for (int k = depth(rng); k > 0; --k) cfg.hidden.push_back(width(rng));
  cfg.input_shift = unit(rng);
  ModelParams model = init_params(cfg, rng());
  for (auto& s : model.stats) {
    for (Eigen::Index i = 0; i < s.mean.size(); ++i) {
      s.mean[i] = 0.5 * unit(rng);
      s.var[i] = 0.5 + unit(rng);
    }
  }
  for (auto& g : model.trainable.gammas) {
    for (Eigen::Index i = 0; i < g.size(); ++i) g[i] += 0.3 * gauss(rng);
  }
  for (auto& b : model.trainable.betas) {
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = 0.3 * gauss(rng);
  }

  const Margins margins{0.2 * unit(rng), 0.8 + 0.6 * unit(rng)};
  const double w = unit(rng);
  const int n_classes = classes(rng);
  auto label_of = [&](int c) {
    return c == 0 ? Label(LabelSpace::target, 0) : Label(LabelSpace::primary, static_cast<std::uint64_t>(c));
  };

  auto make_views = [&](int n) {
    ViewBatch b;
    b.views = Matrix(cfg.input_dim, 2 * n);
    for (Eigen::Index i = 0; i < b.views.size(); ++i) b.views(i) = gauss(rng);
    for (int i = 0; i < n; ++i) {
      const Label l = label_of(static_cast<int>(rng() % static_cast<unsigned>(n_classes)));
      b.labels.push_back(l);
      b.labels.push_back(l);
    }
    return b;
  };
  const ViewBatch primary = make_views(items(rng));
  const ViewBatch secondary = make_views(items(rng));

  CrossBatchMemory memory(64);
  {
    const int prior = static_cast<int>(rng() % 6);
    Matrix e(cfg.output_dim, prior);
    std::vector<Label> l;
    for (int i = 0; i < prior; ++i) {
      for (Eigen::Index r = 0; r < e.rows(); ++r) e(r, i) = gauss(rng);
      e.col(i).normalize();
      l.push_back(label_of(static_cast<int>(rng() % static_cast<unsigned>(n_classes))));
    }
    if (prior > 0) memory.update(e, l);
  }

  model.mode = Mode::train;
  const LossOutput lp = loss_primary(model, primary, memory, margins);
  const CrossBatchMemory memory_p = memory;
  const LossOutput ls = loss_secondary(model, secondary, memory, margins);
  const CrossBatchMemory memory_s = memory;

  for (std::size_t i = 0; i < memory_s.size(); ++i) {
    for (std::size_t j = i + 1; j < memory_s.size(); ++j) {
      if ((memory_s[i].embedding - memory_s[j].embedding).norm() < 1e-2) return std::nullopt;
    }
  }

  Parameters mixed = lp.grads;
  mixed *= 1.0 - w;
  mixed.add_scaled(ls.grads, w);
  const Vector analytic = mixed.flatten();

  ModelParams probe = model;
  probe.mode = Mode::eval;
  const Vector theta = model.trainable.flatten();
  // Pattern of every piecewise choice in the loss: ReLU gates and which
  // memory entries count as positives or negatives.
  std::vector<bool> pattern;
  auto side = [&](const ViewBatch& b, const CrossBatchMemory& mem) {
    ForwardCache cache;
    const Matrix e = forward(probe, b.views, &cache);
    for (const auto& z : cache.pre_activation) {
      for (Eigen::Index i = 0; i < z.size(); ++i) pattern.push_back(z(i) > 0.0);
    }
    const std::size_t first = mem.size() - static_cast<std::size_t>(e.cols());
    for (Eigen::Index i = 0; i < e.cols(); ++i) {
      for (std::size_t j = 0; j < mem.size(); ++j) {
        if (j == first + static_cast<std::size_t>(i)) continue;
        const double d = (e.col(i) - mem[j].embedding).norm();
        pattern.push_back(mem[j].label == b.labels[static_cast<std::size_t>(i)] ? d > margins.positive
                                                                                 : d < margins.negative);
      }
    }
    return contrastive_loss_xbm(e, b.labels, mem, margins).loss;
  };
  auto loss_at = [&](const Vector& t) {
    probe.trainable.assign_flat(t);
    pattern.clear();
    const double a = side(primary, memory_p);
    const double b = side(secondary, memory_s);
    return (1.0 - w) * a + w * b;
  };

  GradCheck result;
  result.parameters = theta.size();
  Vector t = theta;
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    t[k] = theta[k] + step;
    const double up = loss_at(t);
    const std::vector<bool> pattern_up = pattern;
    t[k] = theta[k] - step;
    const double down = loss_at(t);
    t[k] = theta[k];
    // A stencil straddling a kink is not a valid difference quotient.
    if (pattern != pattern_up) {
      ++result.skipped;
      continue;
    }
    const double numeric = (up - down) / (2.0 * step);
    result.max_rel_error = std::max(result.max_rel_error, relative_error(analytic[k], numeric));
  }
  return result;
}

inline GradCheck check_mixed_loss_gradient(std::mt19937_64& rng, double step = 1e-6) {
  for (;;) {
    if (auto r = try_mixed_loss_gradient(rng, step)) return *r;
  }
}

}  // namespace oracle
