#include "duohash/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace duohash {

namespace {

std::vector<PairScore> ranked(std::span<const PairScore> pairs) {
  std::vector<PairScore> sorted(pairs.begin(), pairs.end());
  std::sort(sorted.begin(), sorted.end(), [](const PairScore& a, const PairScore& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    if (a.query_id != b.query_id) return a.query_id < b.query_id;
    return a.ref_id < b.ref_id;
  });
  return sorted;
}

std::size_t count_true(std::span<const PairScore> pairs) {
  return static_cast<std::size_t>(
      std::count_if(pairs.begin(), pairs.end(), [](const PairScore& p) { return p.is_true_match; }));
}

}  // namespace

double micro_average_precision(std::span<const PairScore> pairs) {
  const std::size_t positives = count_true(pairs);
  if (positives == 0) throw std::invalid_argument("micro_average_precision: no true-match pair, recall undefined");

  const auto sorted = ranked(pairs);
  double area = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (!sorted[i].is_true_match) continue;
    ++hits;
    // Recall only moves at true matches, by 1/positives each time.
    const double precision = static_cast<double>(hits) / static_cast<double>(i + 1);
    area += precision / static_cast<double>(positives);
  }
  return area;
}

PrecisionRecall precision_recall_at(std::span<const PairScore> pairs, double threshold) {
  if (pairs.empty()) throw std::invalid_argument("precision_recall_at: empty pair list");
  std::size_t flagged = 0;
  std::size_t true_flagged = 0;
  std::size_t total_true = 0;
  for (const auto& p : pairs) {
    total_true += p.is_true_match;
    if (p.distance < threshold) {
      ++flagged;
      true_flagged += p.is_true_match;
    }
  }
  PrecisionRecall out;
  out.precision = flagged == 0 ? 0.0 : static_cast<double>(true_flagged) / static_cast<double>(flagged);
  out.recall = total_true == 0 ? 0.0 : static_cast<double>(true_flagged) / static_cast<double>(total_true);
  return out;
}

double calibrate_threshold(std::span<const PairScore> pairs, double target_precision) {
  if (pairs.empty()) throw std::invalid_argument("calibrate_threshold: empty pair list");
  const auto sorted = ranked(pairs);

  double best_threshold = std::numeric_limits<double>::quiet_NaN();
  double best_precision = 0.0;
  std::size_t flagged = 0;
  std::size_t true_flagged = 0;
  // Walk groups of equal distance; a candidate placed after group g flags all of 0..g.
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j].distance == sorted[i].distance) {
      ++flagged;
      true_flagged += sorted[j].is_true_match;
      ++j;
    }
    const double candidate = j < sorted.size() ? 0.5 * (sorted[i].distance + sorted[j].distance)
                                               : sorted[i].distance + std::max(1.0, std::abs(sorted[i].distance));
    const double precision = static_cast<double>(true_flagged) / static_cast<double>(flagged);
    best_precision = std::max(best_precision, precision);
    if (precision >= target_precision) best_threshold = candidate;
    i = j;
  }
  if (std::isnan(best_threshold)) {
    throw std::runtime_error("calibrate_threshold: target precision " + format_double(target_precision) +
                             " unachievable; best achievable precision is " + format_double(best_precision));
  }
  return best_threshold;
}

double f1_score(double precision, double recall) {
  const double denom = precision + recall;
  return denom > 0.0 ? 2.0 * precision * recall / denom : 0.0;
}

FrReport fr_metrics(std::span<const QueryFlag> flags) {
  std::size_t targets = 0;
  std::size_t others = 0;
  std::size_t flagged_targets = 0;
  std::size_t flagged_others = 0;
  for (const auto& f : flags) {
    if (f.is_target_image) {
      ++targets;
      flagged_targets += f.flagged;
    } else {
      ++others;
      flagged_others += f.flagged;
    }
  }
  if (targets == 0 || others == 0) {
    throw std::invalid_argument("fr_metrics: need at least one target and one non-target image");
  }
  FrReport r;
  r.recall = static_cast<double>(flagged_targets) / static_cast<double>(targets);
  r.fp_per_million = static_cast<double>(flagged_others) / static_cast<double>(others) * 1e6;
  const std::size_t flagged = flagged_targets + flagged_others;
  r.precision = flagged == 0 ? 0.0 : static_cast<double>(flagged_targets) / static_cast<double>(flagged);
  r.f1 = f1_score(r.precision, r.recall);
  return r;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median: empty input");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::string format_double(double value) {
  char buf[64];
  const auto result = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, result.ptr);
}

double MetricTable::get(const std::string& name) const {
  for (const auto& [key, value] : rows_) {
    if (key == name) return value;
  }
  throw std::out_of_range("MetricTable: no metric named " + name);
}

std::string MetricTable::to_csv() const {
  std::string out = "metric,value\n";
  for (const auto& [key, value] : rows_) out += key + "," + format_double(value) + "\n";
  return out;
}

std::string MetricTable::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [key, value] : rows_) {
    if (std::isfinite(value)) {
      j[key] = value;
    } else {
      j[key] = nullptr;
    }
  }
  return j.dump(2) + "\n";
}

void MetricTable::write(const std::filesystem::path& stem) const {
  auto write_file = [](const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
  };
  write_file(std::filesystem::path(stem.string() + ".csv"), to_csv());
  write_file(std::filesystem::path(stem.string() + ".json"), to_json());
}

}  // namespace duohash
