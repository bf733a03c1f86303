#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "duohash/embedmodel.hpp"
#include "duohash/synthgen.hpp"
#include "duohash/trainer.hpp"

namespace duohash {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

struct SimulateConfig {
  std::vector<std::size_t> k_sweep{100, 50, 25, 10, 5, 1};
  Eigen::Index lsh_bits = 256;
  std::uint64_t lsh_seed = 1;
  bool renormalize_templates = false;
  std::uint64_t kmeans_seed = 1;
  int forge_iterations = 5000;
  double lambda_vis = 1.0;
  double forge_step = 0.01;
  std::size_t cover_pool = 20;  // attacker covers drawn per forging seed
  int forge_seeds = 10;
};

struct CleanConfig {
  double t_mis = 0.6;
  double t_dup = 1.0;
};

/// Everything one run needs: the world, the model/training settings and the
/// downstream study settings. Mode overrides are kept so a resolved config
/// can be re-resolved for another mode.
struct RunConfig {
  std::uint64_t seed = 1;
  WorldConfig world;
  TrainingConfig training;
  SimulateConfig simulate;
  CleanConfig clean;
  Json mode_overrides = Json::object();
};

RunConfig config_from_json(const Json& doc);
Json config_to_json(const RunConfig& config);
RunConfig load_config(const std::filesystem::path& path);

const char* mode_name(TrainMode mode);
TrainMode parse_mode(std::string_view name);

/// Sets the training mode, applies the matching override block and sizes the
/// world for `targets` target individuals (the non-target population is kept).
void apply_mode(RunConfig& config, TrainMode mode, std::size_t targets);

Json model_to_json(const ModelParams& model);
ModelParams model_from_json(const Json& doc);

std::string sha256_hex(std::string_view bytes);
std::string read_file(const std::filesystem::path& path);
/// Writes the bytes and returns their SHA-256.
std::string write_file(const std::filesystem::path& path, std::string_view bytes);

/// Stable text form for files that get hashed or compared byte for byte.
std::string dump_json(const Json& doc);

struct OracleTables {
  std::map<std::string, std::vector<Vector>> faces;
  std::map<std::string, Vector> embeddings;
};

OracleTables load_oracle(const std::filesystem::path& path);
void save_oracle(const std::filesystem::path& path, const OracleTables& tables);

}  // namespace duohash
