#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "duohash/io.hpp"
#include "duohash/metrics.hpp"

namespace duohash {

namespace fs = std::filesystem;

using Reports = std::map<std::string, MetricTable>;

/// Writes each table as <dir>/<name>.csv and <dir>/<name>.json.
void write_reports(const fs::path& dir, const Reports& reports);

/// "p90" -> 0.90. Accepts pNN with 0 < NN <= 100.
double parse_threshold_spec(const std::string& spec);

struct TrainOptions {
  RunConfig config;  // mode already applied
  fs::path out;
  std::vector<std::uint64_t> seeds;  // empty: config.seed
  int jobs = 1;
  std::ostream* log = nullptr;
};

/// One run directory per seed: manifest.json, checkpoints/epoch_XX.json, best
/// marker and reports/training.{csv,json}. With several seeds the runs go to
/// out/seed_<s>.
std::vector<fs::path> cmd_train(const TrainOptions& options);

struct LoadedRun {
  fs::path dir;
  RunConfig config;
  std::uint64_t seed = 0;
  int epoch = 0;
  World world;
  ModelParams model;
};

/// Regenerates the world and loads the selected checkpoint, checking its hash.
LoadedRun load_run(const fs::path& run_dir);

enum class EvalTask { icd, fr, both };
EvalTask parse_eval_task(const std::string& name);

struct EvalOptions {
  fs::path run_dir;
  EvalTask task = EvalTask::both;
  std::string threshold_spec = "p90";
  bool lsh = false;
};

Reports cmd_eval(const EvalOptions& options);

struct SimulateOptions {
  fs::path run_dir;
  std::vector<std::size_t> k_sweep;  // empty: from the run config
  bool lsh = false;
  bool forge = false;
  std::string threshold_spec = "p90";
};

Reports cmd_simulate(const SimulateOptions& options);

struct ForgeCommandOptions {
  fs::path run_dir;
  int seeds = 0;  // 0: from the run config
  std::string threshold_spec = "p90";
};

Reports cmd_forge(const ForgeCommandOptions& options);
Reports cmd_calibrate(const fs::path& run_dir);
Reports cmd_activations(const fs::path& run_dir);

struct CleanOptions {
  fs::path items;   // newline-delimited ids of one individual
  fs::path oracle;  // JSON {"faces": {...}, "embeddings": {...}}
  double t_mis = 0.6;
  double t_dup = 1.0;
  fs::path out;
};

/// Writes mislabeled.txt, duplicates.txt and clean_summary.{csv,json}.
Reports cmd_clean(const CleanOptions& options);

}  // namespace duohash
