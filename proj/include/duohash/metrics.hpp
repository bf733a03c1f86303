#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace duohash {

/// Distance between one query and one reference hash, with ground truth.
struct PairScore {
  std::uint64_t query_id = 0;
  std::uint64_t ref_id = 0;
  double distance = 0.0;
  bool is_true_match = false;
};

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
};

struct FrReport {
  double recall = 0.0;
  double fp_per_million = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
};

/// One query image in a recognition study: whether it shows the individual
/// under test and whether the scan flagged it.
struct QueryFlag {
  bool is_target_image = false;
  bool flagged = false;
};

/// Area under the pairwise precision-recall curve. Pairs are ranked by
/// ascending distance; equal distances fall back to (query_id, ref_id).
double micro_average_precision(std::span<const PairScore> pairs);

/// Pairs with distance strictly below the threshold are flagged.
PrecisionRecall precision_recall_at(std::span<const PairScore> pairs, double threshold);

/// Largest candidate threshold (midpoints between consecutive distinct
/// distances, plus one point above the maximum) reaching target_precision.
double calibrate_threshold(std::span<const PairScore> pairs, double target_precision);

FrReport fr_metrics(std::span<const QueryFlag> flags);

double f1_score(double precision, double recall);
double median(std::vector<double> values);

/// Ordered (metric, value) table; the export format for every report.
class MetricTable {
 public:
  void add(std::string name, double value) { rows_.emplace_back(std::move(name), value); }
  const std::vector<std::pair<std::string, double>>& rows() const { return rows_; }
  double get(const std::string& name) const;

  std::string to_csv() const;
  std::string to_json() const;
  void write(const std::filesystem::path& stem) const;  // writes stem.csv and stem.json

 private:
  std::vector<std::pair<std::string, double>> rows_;
};

/// Shortest text form of a double that reads back to the same bits.
std::string format_double(double value);

}  // namespace duohash
