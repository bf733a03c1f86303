#include "duohash/io.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "duohash/error.hpp"

namespace duohash {

namespace {

// Reads `key` into `out` when present; the key is then marked as consumed.
class Reader {
 public:
  Reader(const Json& doc, std::string where) : doc_(doc), where_(std::move(where)) {
    if (!doc_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = doc_.find(key);
    if (it == doc_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  const Json* child(const char* key) {
    seen_.insert(key);
    auto it = doc_.find(key);
    return it == doc_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = doc_.begin(); it != doc_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(where_ + ": unknown key '" + it.key() + "'");
    }
  }

 private:
  const Json& doc_;
  std::string where_;
  std::set<std::string> seen_;
};

void read_strength(const Json* doc, const char* where, AugmentStrength& s) {
  if (!doc) return;
  Reader r(*doc, where);
  r.get("noise", s.noise);
  r.get("mask", s.mask);
  r.finish();
}

void read_training(const Json& doc, RunConfig& c) {
  Reader r(doc, "training");
  auto& t = c.training;
  auto& w = c.world;
  r.get("epochs", t.epochs);
  r.get("b_primary", t.b_primary);
  r.get("b_secondary", t.b_secondary);
  r.get("p_T", t.p_T);
  r.get("w", t.w);
  r.get("M", t.M);
  r.get("m_p", t.m_p);
  r.get("m_n", t.m_n);
  r.get("eta", t.eta);
  r.get("gamma", t.gamma);
  r.get("eta_min", t.eta_min);
  r.get("weight_decay", t.weight_decay);
  r.get("momentum", t.momentum);
  r.get("accumulation", t.accumulation);
  r.get("threshold_precision", t.threshold_precision);
  r.get("N_T_train", w.n_target_train);
  r.get("N_Tprime_train", w.n_nontarget_train);
  r.get("N_T_val", w.n_target_val);
  r.get("N_Tprime_val", w.n_nontarget_val);
  r.finish();
}

Json training_json(const RunConfig& c) {
  const auto& t = c.training;
  const auto& w = c.world;
  return Json{{"epochs", t.epochs},
              {"b_primary", t.b_primary},
              {"b_secondary", t.b_secondary},
              {"p_T", t.p_T},
              {"w", t.w},
              {"M", t.M},
              {"m_p", t.m_p},
              {"m_n", t.m_n},
              {"eta", t.eta},
              {"gamma", t.gamma},
              {"eta_min", t.eta_min},
              {"weight_decay", t.weight_decay},
              {"momentum", t.momentum},
              {"accumulation", t.accumulation},
              {"threshold_precision", t.threshold_precision},
              {"N_T_train", w.n_target_train},
              {"N_Tprime_train", w.n_nontarget_train},
              {"N_T_val", w.n_target_val},
              {"N_Tprime_val", w.n_nontarget_val}};
}

}  // namespace

const char* mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::single_purpose: return "single";
    case TrainMode::dual_purpose: return "dual";
    case TrainMode::multi_target: return "multi";
  }
  return "?";
}

TrainMode parse_mode(std::string_view name) {
  if (name == "single") return TrainMode::single_purpose;
  if (name == "dual") return TrainMode::dual_purpose;
  if (name == "multi") return TrainMode::multi_target;
  throw ConfigError("unknown mode '" + std::string(name) + "' (expected single, dual or multi)");
}

RunConfig config_from_json(const Json& doc) {
  RunConfig c;
  Reader top(doc, "config");
  int schema = 0;
  top.get("schema_version", schema);
  if (schema != kSchemaVersion) {
    throw ConfigError("config: schema_version " + std::to_string(schema) + " is not supported (expected " +
                      std::to_string(kSchemaVersion) + ")");
  }
  top.get("seed", c.seed);
  std::string mode = mode_name(c.training.mode);
  top.get("mode", mode);
  c.training.mode = parse_mode(mode);
  top.get("targets", c.training.targets);

  if (const Json* w = top.child("world")) {
    Reader r(*w, "world");
    auto& wc = c.world;
    r.get("seed", wc.seed);
    r.get("d_in", wc.d_in);
    r.get("d_identity", wc.d_identity);
    r.get("n_primary", wc.n_primary);
    r.get("n_ref_val", wc.n_ref_val);
    r.get("n_query_val", wc.n_query_val);
    r.get("n_ref_test", wc.n_ref_test);
    r.get("n_query_test", wc.n_query_test);
    r.get("query_match_fraction", wc.query_match_fraction);
    r.get("n_benign", wc.n_benign);
    r.get("n_attacker_pool", wc.n_attacker_pool);
    r.get("n_identities", wc.n_identities);
    r.get("n_targets", wc.n_targets);
    r.get("images_per_identity", wc.images_per_identity);
    r.get("identity_scale", wc.identity_scale);
    r.get("sigma_id", wc.sigma_id);
    r.get("sigma_content", wc.sigma_content);
    r.get("background", wc.background);
    read_strength(r.child("augment_moderate"), "world.augment_moderate", wc.moderate);
    read_strength(r.child("augment_heavy"), "world.augment_heavy", wc.heavy);
    r.finish();
  }
  if (const Json* m = top.child("model")) {
    Reader r(*m, "model");
    r.get("hidden", c.training.hidden);
    r.get("l", c.training.l);
    r.finish();
  }
  if (const Json* t = top.child("training")) read_training(*t, c);
  if (const Json* s = top.child("simulate")) {
    Reader r(*s, "simulate");
    auto& sc = c.simulate;
    r.get("k_sweep", sc.k_sweep);
    r.get("lsh_bits", sc.lsh_bits);
    r.get("lsh_seed", sc.lsh_seed);
    r.get("renormalize_templates", sc.renormalize_templates);
    r.get("kmeans_seed", sc.kmeans_seed);
    r.get("forge_iterations", sc.forge_iterations);
    r.get("lambda_vis", sc.lambda_vis);
    r.get("forge_step", sc.forge_step);
    r.get("cover_pool", sc.cover_pool);
    r.get("forge_seeds", sc.forge_seeds);
    r.finish();
  }
  if (const Json* cl = top.child("clean")) {
    Reader r(*cl, "clean");
    r.get("T_mis", c.clean.t_mis);
    r.get("T_dup", c.clean.t_dup);
    r.finish();
  }
  if (const Json* o = top.child("mode_overrides")) {
    if (!o->is_object()) throw ConfigError("mode_overrides: expected an object");
    for (auto it = o->begin(); it != o->end(); ++it) parse_mode(it.key());
    c.mode_overrides = *o;
  }
  top.finish();

  try {
    c.world.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  c.training.validate();
  return c;
}

Json config_to_json(const RunConfig& c) {
  const auto& w = c.world;
  const auto& s = c.simulate;
  return Json{
      {"schema_version", kSchemaVersion},
      {"seed", c.seed},
      {"mode", mode_name(c.training.mode)},
      {"targets", c.training.targets},
      {"world",
       {{"seed", w.seed},
        {"d_in", w.d_in},
        {"d_identity", w.d_identity},
        {"n_primary", w.n_primary},
        {"n_ref_val", w.n_ref_val},
        {"n_query_val", w.n_query_val},
        {"n_ref_test", w.n_ref_test},
        {"n_query_test", w.n_query_test},
        {"query_match_fraction", w.query_match_fraction},
        {"n_benign", w.n_benign},
        {"n_attacker_pool", w.n_attacker_pool},
        {"n_identities", w.n_identities},
        {"n_targets", w.n_targets},
        {"images_per_identity", w.images_per_identity},
        {"identity_scale", w.identity_scale},
        {"sigma_id", w.sigma_id},
        {"sigma_content", w.sigma_content},
        {"background", w.background},
        {"augment_moderate", {{"noise", w.moderate.noise}, {"mask", w.moderate.mask}}},
        {"augment_heavy", {{"noise", w.heavy.noise}, {"mask", w.heavy.mask}}}}},
      {"model", {{"hidden", c.training.hidden}, {"l", c.training.l}}},
      {"training", training_json(c)},
      {"simulate",
       {{"k_sweep", s.k_sweep},
        {"lsh_bits", s.lsh_bits},
        {"lsh_seed", s.lsh_seed},
        {"renormalize_templates", s.renormalize_templates},
        {"kmeans_seed", s.kmeans_seed},
        {"forge_iterations", s.forge_iterations},
        {"lambda_vis", s.lambda_vis},
        {"forge_step", s.forge_step},
        {"cover_pool", s.cover_pool},
        {"forge_seeds", s.forge_seeds}}},
      {"clean", {{"T_mis", c.clean.t_mis}, {"T_dup", c.clean.t_dup}}},
      {"mode_overrides", c.mode_overrides}};
}

RunConfig load_config(const std::filesystem::path& path) {
  Json doc;
  try {
    doc = Json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(doc);
}

void apply_mode(RunConfig& c, TrainMode mode, std::size_t targets) {
  if (targets < 1) throw ConfigError("--targets must be at least 1");
  if (mode == TrainMode::dual_purpose && targets != 1) throw ConfigError("dual mode trains exactly one target; use --mode multi");
  c.training.mode = mode;
  if (mode == TrainMode::multi_target || mode == TrainMode::dual_purpose) {
    const std::size_t nontarget = c.world.n_identities - c.world.n_targets;
    c.world.n_targets = targets;
    c.world.n_identities = nontarget + targets;
    c.training.targets = targets;
  }
  auto it = c.mode_overrides.find(mode_name(mode));
  if (it != c.mode_overrides.end()) read_training(*it, c);
  try {
    c.world.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  c.training.validate();
}

Json model_to_json(const ModelParams& model) {
  const auto& cfg = model.config;
  auto matrix = [](const Matrix& m) {
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      Json row = Json::array();
      for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
      rows.push_back(std::move(row));
    }
    return rows;
  };
  auto vector = [](const Vector& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); };
  Json layers = Json::array();
  const auto& p = model.trainable;
  for (std::size_t k = 0; k < p.weights.size(); ++k) {
    Json layer{{"weight", matrix(p.weights[k])}, {"bias", vector(p.biases[k])}};
    if (k < cfg.hidden.size()) {
      layer["gamma"] = vector(p.gammas[k]);
      layer["beta"] = vector(p.betas[k]);
      layer["running_mean"] = vector(model.stats[k].mean);
      layer["running_var"] = vector(model.stats[k].var);
    }
    layers.push_back(std::move(layer));
  }
  return Json{{"input_dim", cfg.input_dim},
              {"hidden", cfg.hidden},
              {"output_dim", cfg.output_dim},
              {"input_shift", cfg.input_shift},
              {"norm_momentum", cfg.norm_momentum},
              {"norm_eps", cfg.norm_eps},
              {"layers", std::move(layers)}};
}

ModelParams model_from_json(const Json& doc) {
  try {
    ModelConfig cfg;
    cfg.input_dim = doc.at("input_dim").get<Eigen::Index>();
    cfg.hidden = doc.at("hidden").get<std::vector<Eigen::Index>>();
    cfg.output_dim = doc.at("output_dim").get<Eigen::Index>();
    cfg.input_shift = doc.at("input_shift").get<double>();
    cfg.norm_momentum = doc.at("norm_momentum").get<double>();
    cfg.norm_eps = doc.at("norm_eps").get<double>();
    ModelParams model = init_params(cfg, 0);
    model.mode = Mode::eval;
    const Json& layers = doc.at("layers");
    if (layers.size() != model.trainable.weights.size()) throw ConfigError("checkpoint: layer count mismatch");
    auto read_matrix = [](const Json& rows, Matrix& m) {
      if (rows.size() != static_cast<std::size_t>(m.rows())) throw ConfigError("checkpoint: matrix shape mismatch");
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        const auto row = rows[static_cast<std::size_t>(r)].get<std::vector<double>>();
        if (row.size() != static_cast<std::size_t>(m.cols())) throw ConfigError("checkpoint: matrix shape mismatch");
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = row[static_cast<std::size_t>(c)];
      }
    };
    auto read_vector = [](const Json& values, Vector& v) {
      const auto data = values.get<std::vector<double>>();
      if (data.size() != static_cast<std::size_t>(v.size())) throw ConfigError("checkpoint: vector length mismatch");
      v = Eigen::Map<const Vector>(data.data(), v.size());
    };
    auto& p = model.trainable;
    for (std::size_t k = 0; k < layers.size(); ++k) {
      const Json& layer = layers[k];
      read_matrix(layer.at("weight"), p.weights[k]);
      read_vector(layer.at("bias"), p.biases[k]);
      if (k < cfg.hidden.size()) {
        read_vector(layer.at("gamma"), p.gammas[k]);
        read_vector(layer.at("beta"), p.betas[k]);
        read_vector(layer.at("running_mean"), model.stats[k].mean);
        read_vector(layer.at("running_var"), model.stats[k].var);
      }
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("checkpoint: ") + e.what());
  }
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256: digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * length);
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
  return sha256_hex(bytes);
}

std::string dump_json(const Json& doc) { return doc.dump(2) + "\n"; }

OracleTables load_oracle(const std::filesystem::path& path) {
  OracleTables tables;
  try {
    const Json doc = Json::parse(read_file(path));
    for (auto it = doc.at("faces").begin(); it != doc.at("faces").end(); ++it) {
      auto& faces = tables.faces[it.key()];
      for (const auto& face : *it) {
        const auto v = face.get<std::vector<double>>();
        faces.push_back(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
      }
    }
    for (auto it = doc.at("embeddings").begin(); it != doc.at("embeddings").end(); ++it) {
      const auto v = it->get<std::vector<double>>();
      tables.embeddings[it.key()] = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return tables;
}

void save_oracle(const std::filesystem::path& path, const OracleTables& tables) {
  auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  Json faces = Json::object();
  for (const auto& [id, list] : tables.faces) {
    Json arr = Json::array();
    for (const auto& f : list) arr.push_back(vec(f));
    faces[id] = std::move(arr);
  }
  Json embeddings = Json::object();
  for (const auto& [id, e] : tables.embeddings) embeddings[id] = vec(e);
  write_file(path, dump_json(Json{{"faces", std::move(faces)}, {"embeddings", std::move(embeddings)}}));
}

}  // namespace duohash
