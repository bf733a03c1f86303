#include "duohash/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <exception>
#include <mutex>
#include <numeric>
#include <ostream>
#include <thread>

#include "duohash/css.hpp"
#include "duohash/datatools.hpp"
#include "duohash/error.hpp"
#include "duohash/evaluation.hpp"

namespace duohash {

namespace {

std::string two_digits(int v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02d", v);
  return buf;
}

std::string threshold_tag(double precision) {
  return "p" + format_double(precision * 100.0);
}

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double min_of(const std::vector<double>& v) { return v.empty() ? 0.0 : *std::min_element(v.begin(), v.end()); }

void add_fr_rows(MetricTable& t, const FrStudy& fr) {
  for (const auto& ind : fr.individuals) {
    const std::string prefix = std::string(ind.is_target ? "target." : "nontarget.") + std::to_string(ind.identity) + ".";
    t.add(prefix + "recall", ind.report.recall);
    t.add(prefix + "fp_per_million", ind.report.fp_per_million);
    t.add(prefix + "precision", ind.report.precision);
    t.add(prefix + "f1", ind.report.f1);
  }
  const auto tr = fr.target_values(&FrReport::recall);
  const auto tf = fr.target_values(&FrReport::f1);
  t.add("target.count", static_cast<double>(tr.size()));
  t.add("target.recall_mean", mean(tr));
  t.add("target.recall_min", min_of(tr));
  t.add("target.f1_mean", mean(tf));
  t.add("target.fp_per_million_mean", mean(fr.target_values(&FrReport::fp_per_million)));
  const auto nf = fr.nontarget_values(&FrReport::f1);
  if (!nf.empty()) {
    t.add("nontarget.count", static_cast<double>(nf.size()));
    t.add("nontarget.f1_median", median(nf));
    t.add("nontarget.f1_mean", mean(nf));
    t.add("nontarget.f1_max", *std::max_element(nf.begin(), nf.end()));
    t.add("nontarget.recall_median", median(fr.nontarget_values(&FrReport::recall)));
    t.add("nontarget.fp_per_million_median", median(fr.nontarget_values(&FrReport::fp_per_million)));
  }
}

double calibrated_threshold(const ModelParams& model, const World& world, double precision,
                            const LshProjector* projector) {
  const IcdStudy val = icd_study(model, world, Split::val, projector);
  try {
    return calibrate_threshold(val.pairs, precision);
  } catch (const std::runtime_error& e) {
    throw NumericalFailure(std::string("threshold calibration failed: ") + e.what());
  }
}

LshProjector make_projector(const LoadedRun& run) {
  return LshProjector(run.model.config.output_dim, run.config.simulate.lsh_bits, run.config.simulate.lsh_seed);
}

fs::path train_one(const RunConfig& config, std::uint64_t seed, const fs::path& dir, std::ostream* log,
                   std::mutex& log_mutex) {
  const World world = generate_world(config.world);
  fs::create_directories(dir / "checkpoints");

  RunConfig resolved = config;
  resolved.seed = seed;
  Json epochs = Json::array();
  MetricTable table;
  std::vector<double> scores;
  auto on_epoch = [&](const EpochCheckpoint& cp) {
    const std::string rel = "checkpoints/epoch_" + two_digits(cp.epoch) + ".json";
    const std::string digest = write_file(dir / rel, dump_json(model_to_json(cp.model)));
    epochs.push_back(Json{{"epoch", cp.epoch},
                          {"train_loss", cp.train_loss},
                          {"mu_ap_val", cp.validation.mu_ap},
                          {"threshold", cp.validation.threshold},
                          {"f1_target_val", cp.validation.target_f1},
                          {"score", cp.score},
                          {"checkpoint", rel},
                          {"sha256", digest}});
    const std::string prefix = "epoch_" + two_digits(cp.epoch) + ".";
    table.add(prefix + "train_loss", cp.train_loss);
    table.add(prefix + "mu_ap_val", cp.validation.mu_ap);
    table.add(prefix + "threshold", cp.validation.threshold);
    table.add(prefix + "f1_target_val", cp.validation.target_f1);
    table.add(prefix + "score", cp.score);
    scores.push_back(cp.score);
    if (log) {
      std::lock_guard<std::mutex> lock(log_mutex);
      *log << "[seed " << seed << "] epoch " << cp.epoch << " loss " << format_double(cp.train_loss) << " muAP_val "
           << format_double(cp.validation.mu_ap) << " F1_target_val " << format_double(cp.validation.target_f1)
           << " score " << format_double(cp.score) << std::endl;
    }
  };
  train(config.training, world, seed, on_epoch);

  const std::size_t best = select_best_index(scores);
  const Json& chosen = epochs[best];
  table.add("selected_epoch", chosen["epoch"].get<double>());
  write_file(dir / "best", chosen["checkpoint"].get<std::string>() + "\n");
  const Json manifest{{"tool", "duohash"},
                      {"version", kToolVersion},
                      {"seed", seed},
                      {"world_seed", config.world.seed},
                      {"config", config_to_json(resolved)},
                      {"epochs", epochs},
                      {"selected_epoch", chosen["epoch"]},
                      {"best_checkpoint", chosen["checkpoint"]},
                      {"best_sha256", chosen["sha256"]}};
  write_file(dir / "manifest.json", dump_json(manifest));
  write_reports(dir / "reports", Reports{{"training", table}});
  return dir;
}

}  // namespace

void write_reports(const fs::path& dir, const Reports& reports) {
  fs::create_directories(dir);
  for (const auto& [name, table] : reports) table.write(dir / name);
}

double parse_threshold_spec(const std::string& spec) {
  if (spec.size() < 2 || spec[0] != 'p') throw ConfigError("threshold spec '" + spec + "' must look like p90");
  double pct = 0.0;
  try {
    std::size_t used = 0;
    pct = std::stod(spec.substr(1), &used);
    if (used != spec.size() - 1) throw std::invalid_argument("trailing characters");
  } catch (const std::exception&) {
    throw ConfigError("threshold spec '" + spec + "' must look like p90");
  }
  if (!(pct > 0.0 && pct <= 100.0)) throw ConfigError("threshold spec '" + spec + "' outside (0, 100]");
  return pct / 100.0;
}

std::vector<fs::path> cmd_train(const TrainOptions& options) {
  std::vector<std::uint64_t> seeds = options.seeds;
  if (seeds.empty()) seeds.push_back(options.config.seed);
  if (options.jobs < 1) throw ConfigError("--jobs must be at least 1");
  options.config.training.validate();

  std::vector<fs::path> dirs;
  for (auto s : seeds) dirs.push_back(seeds.size() == 1 ? options.out : options.out / ("seed_" + std::to_string(s)));

  std::mutex log_mutex;
  std::vector<std::exception_ptr> errors(seeds.size());
  std::size_t next = 0;
  std::mutex queue_mutex;
  auto worker = [&]() {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard<std::mutex> lock(queue_mutex);
        if (next >= seeds.size()) return;
        i = next++;
      }
      try {
        train_one(options.config, seeds[i], dirs[i], options.log, log_mutex);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int threads = std::min<int>(options.jobs, static_cast<int>(seeds.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return dirs;
}

LoadedRun load_run(const fs::path& run_dir) {
  const fs::path manifest_path = run_dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw ConfigError("no run manifest in " + run_dir.string());
  Json manifest;
  try {
    manifest = Json::parse(read_file(manifest_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(manifest_path.string() + ": " + e.what());
  }
  LoadedRun run;
  run.dir = run_dir;
  run.config = config_from_json(manifest.at("config"));
  run.seed = manifest.at("seed").get<std::uint64_t>();
  run.epoch = manifest.at("selected_epoch").get<int>();
  const fs::path checkpoint = run_dir / manifest.at("best_checkpoint").get<std::string>();
  if (!fs::exists(checkpoint)) throw ConfigError("missing checkpoint " + checkpoint.string());
  const std::string bytes = read_file(checkpoint);
  if (sha256_hex(bytes) != manifest.at("best_sha256").get<std::string>()) {
    throw ConfigError("checkpoint " + checkpoint.string() + " does not match the manifest hash");
  }
  run.model = model_from_json(Json::parse(bytes));
  run.world = generate_world(run.config.world);
  return run;
}

EvalTask parse_eval_task(const std::string& name) {
  if (name == "icd") return EvalTask::icd;
  if (name == "fr") return EvalTask::fr;
  if (name == "both") return EvalTask::both;
  throw ConfigError("unknown task '" + name + "' (expected icd, fr or both)");
}

Reports cmd_eval(const EvalOptions& options) {
  const double precision = parse_threshold_spec(options.threshold_spec);
  const LoadedRun run = load_run(options.run_dir);
  const LshProjector projector = make_projector(run);
  const LshProjector* proj = options.lsh ? &projector : nullptr;
  const std::string suffix = "_" + threshold_tag(precision) + (options.lsh ? "_lsh" + std::to_string(projector.bit_count()) : "");

  const double threshold = calibrated_threshold(run.model, run.world, precision, proj);
  Reports reports;
  if (options.task != EvalTask::fr) {
    const IcdStudy test = icd_study(run.model, run.world, Split::test, proj);
    const PrecisionRecall pr = precision_recall_at(test.pairs, threshold);
    MetricTable t;
    t.add("selected_epoch", run.epoch);
    t.add("threshold", threshold);
    t.add("mu_ap", test.mu_ap);
    t.add("precision", pr.precision);
    t.add("recall", pr.recall);
    reports["eval_icd" + suffix] = t;
  }
  if (options.task != EvalTask::icd) {
    MetricTable t;
    t.add("selected_epoch", run.epoch);
    t.add("threshold", threshold);
    add_fr_rows(t, fr_study(run.model, run.world, Split::test, threshold, proj));
    reports["eval_fr" + suffix] = t;
  }
  write_reports(run.dir / "reports", reports);
  return reports;
}

namespace {

MetricTable forge_table(const LoadedRun& run, const Vector& template_hash, double threshold, int seeds) {
  const auto& sc = run.config.simulate;
  const Matrix pool = run.world.gather(run.world.attacker_pool);
  if (sc.cover_pool < 1 || sc.cover_pool > static_cast<std::size_t>(pool.cols())) {
    throw ConfigError("simulate.cover_pool must be in [1, n_attacker_pool]");
  }
  ForgeOptions fo;
  fo.iterations = sc.forge_iterations;
  fo.lambda_vis = sc.lambda_vis;
  fo.step = sc.forge_step;
  HashDatabase db = build_database(run.model, Matrix(run.model.config.input_dim, 0), false);
  TemplateSet one;
  one.k = 1;
  one.centroids = template_hash;
  add_templates(db, one);

  MetricTable t;
  t.add("threshold", threshold);
  t.add("lambda_vis", fo.lambda_vis);
  t.add("iterations", fo.iterations);
  int successes = 0;
  std::vector<double> ratios;
  for (int s = 1; s <= seeds; ++s) {
    std::mt19937_64 rng(stream_seed(static_cast<std::uint64_t>(s), 7));
    std::vector<std::size_t> order(static_cast<std::size_t>(pool.cols()));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(sc.cover_pool);
    Matrix covers(pool.rows(), static_cast<Eigen::Index>(order.size()));
    for (std::size_t i = 0; i < order.size(); ++i) covers.col(static_cast<Eigen::Index>(i)) = pool.col(static_cast<Eigen::Index>(order[i]));
    const std::size_t cover = select_cover(run.model, covers, template_hash);
    const ForgeResult r = forge_collision(run.model, covers.col(static_cast<Eigen::Index>(cover)), template_hash, fo);
    const bool flagged = scan(run.model, r.forged, db, threshold).flagged;
    const bool success = flagged && r.perturbation_ratio <= 0.1;
    successes += success;
    ratios.push_back(r.perturbation_ratio);
    const std::string prefix = "seed_" + two_digits(s) + ".";
    t.add(prefix + "cover_item", static_cast<double>(run.world.attacker_pool[order[cover]]));
    t.add(prefix + "hash_distance", r.hash_distance);
    t.add(prefix + "perturbation_ratio", r.perturbation_ratio);
    t.add(prefix + "best_iteration", static_cast<double>(r.best_iteration));
    t.add(prefix + "flagged", flagged ? 1.0 : 0.0);
  }
  t.add("perturbation_ratio_median", median(ratios));
  t.add("flagged_with_ratio_le_0.1", successes);
  t.add("seeds", seeds);
  return t;
}

}  // namespace

Reports cmd_simulate(const SimulateOptions& options) {
  const double precision = parse_threshold_spec(options.threshold_spec);
  const LoadedRun run = load_run(options.run_dir);
  const auto& sc = run.config.simulate;
  const std::vector<std::size_t> ks = options.k_sweep.empty() ? sc.k_sweep : options.k_sweep;
  if (run.world.targets.empty()) throw ConfigError("simulate: the run has no target individual");
  const LshProjector projector = make_projector(run);
  const LshProjector* proj = options.lsh ? &projector : nullptr;
  const std::string tag = threshold_tag(precision);
  const std::string suffix = "_" + tag + (options.lsh ? "_lsh" + std::to_string(projector.bit_count()) : "");

  const double threshold = calibrated_threshold(run.model, run.world, precision, proj);
  const Matrix benign = run.world.gather(run.world.benign);
  const HashDatabase refs = build_database(run.model, run.world.gather(run.world.ref_test), options.lsh, proj);

  MetricTable sweep;
  sweep.add("threshold", threshold);
  sweep.add("fp_per_million_benign.R", fp_study(run.model, benign, refs, threshold, proj).fp_per_million);
  for (std::size_t t = 0; t < run.world.targets.size(); ++t) {
    const Matrix train_hashes = embed(run.model, run.world.gather(run.world.targets[t].train));
    for (auto k : ks) {
      if (k < 1 || k > static_cast<std::size_t>(train_hashes.cols())) {
        throw ConfigError("template count k=" + std::to_string(k) + " exceeds the " +
                          std::to_string(train_hashes.cols()) + " training images of the target");
      }
      const TemplateSet templates = reduce_templates(train_hashes, k, sc.kmeans_seed, sc.renormalize_templates);
      HashDatabase db = refs;
      add_templates(db, templates, proj);
      const FrReport r = database_target_report(run.model, run.world, t, db, threshold, proj);
      const std::string prefix = "target" + std::to_string(t) + ".k" + std::to_string(k) + ".";
      sweep.add(prefix + "recall", r.recall);
      sweep.add(prefix + "precision", r.precision);
      sweep.add(prefix + "f1", r.f1);
      sweep.add(prefix + "fp_per_million", r.fp_per_million);
      sweep.add(prefix + "fp_per_million_benign.Rd", fp_study(run.model, benign, db, threshold, proj).fp_per_million);
    }
  }
  Reports reports;
  reports["simulate_templates" + suffix] = sweep;

  if (options.lsh) {
    const double t_cont = calibrated_threshold(run.model, run.world, precision, nullptr);
    const IcdStudy icd_c = icd_study(run.model, run.world, Split::test);
    const IcdStudy icd_b = icd_study(run.model, run.world, Split::test, proj);
    const FrStudy fr_c = fr_study(run.model, run.world, Split::test, t_cont);
    const FrStudy fr_b = fr_study(run.model, run.world, Split::test, threshold, proj);
    MetricTable cmp;
    cmp.add("lsh_bits", static_cast<double>(projector.bit_count()));
    cmp.add("threshold.continuous", t_cont);
    cmp.add("threshold.lsh", threshold);
    cmp.add("mu_ap.continuous", icd_c.mu_ap);
    cmp.add("mu_ap.lsh", icd_b.mu_ap);
    cmp.add("mu_ap.ratio", icd_b.mu_ap / icd_c.mu_ap);
    const auto rc = fr_c.target_values(&FrReport::recall);
    const auto rb = fr_b.target_values(&FrReport::recall);
    double worst = 0.0;
    for (std::size_t i = 0; i < rc.size(); ++i) worst = std::max(worst, std::abs(rb[i] - rc[i]));
    cmp.add("target.recall_mean.continuous", mean(rc));
    cmp.add("target.recall_mean.lsh", mean(rb));
    cmp.add("target.recall_change_max", worst);
    cmp.add("nontarget.f1_median.continuous", median(fr_c.nontarget_values(&FrReport::f1)));
    cmp.add("nontarget.f1_median.lsh", median(fr_b.nontarget_values(&FrReport::f1)));
    reports["simulate_lsh_comparison_" + tag] = cmp;
  }
  if (options.forge) {
    const double t_cont = options.lsh ? calibrated_threshold(run.model, run.world, precision, nullptr) : threshold;
    const Matrix train_hashes = embed(run.model, run.world.gather(run.world.targets[0].train));
    const TemplateSet one = reduce_templates(train_hashes, 1, sc.kmeans_seed, sc.renormalize_templates);
    reports["simulate_forge_" + tag] = forge_table(run, one.centroids.col(0), t_cont, sc.forge_seeds);
  }
  write_reports(run.dir / "reports", reports);
  return reports;
}

Reports cmd_forge(const ForgeCommandOptions& options) {
  const double precision = parse_threshold_spec(options.threshold_spec);
  const LoadedRun run = load_run(options.run_dir);
  if (run.world.targets.empty()) throw ConfigError("forge: the run has no target individual");
  const double threshold = calibrated_threshold(run.model, run.world, precision, nullptr);
  const Matrix train_hashes = embed(run.model, run.world.gather(run.world.targets[0].train));
  const auto& sc = run.config.simulate;
  const TemplateSet one = reduce_templates(train_hashes, 1, sc.kmeans_seed, sc.renormalize_templates);
  Reports reports;
  reports["forge_" + threshold_tag(precision)] =
      forge_table(run, one.centroids.col(0), threshold, options.seeds > 0 ? options.seeds : sc.forge_seeds);
  write_reports(run.dir / "reports", reports);
  return reports;
}

Reports cmd_calibrate(const fs::path& run_dir) {
  const LoadedRun run = load_run(run_dir);
  const IcdStudy val = icd_study(run.model, run.world, Split::val);
  const IcdStudy test = icd_study(run.model, run.world, Split::test);
  MetricTable t;
  t.add("mu_ap.val", val.mu_ap);
  for (double p : {0.90, 0.95, 0.99}) {
    const std::string tag = threshold_tag(p);
    double threshold = 0.0;
    try {
      threshold = calibrate_threshold(val.pairs, p);
    } catch (const std::runtime_error& e) {
      throw NumericalFailure(std::string("threshold calibration failed: ") + e.what());
    }
    const PrecisionRecall v = precision_recall_at(val.pairs, threshold);
    const PrecisionRecall s = precision_recall_at(test.pairs, threshold);
    t.add(tag + ".threshold", threshold);
    t.add(tag + ".precision.val", v.precision);
    t.add(tag + ".recall.val", v.recall);
    t.add(tag + ".precision.test", s.precision);
    t.add(tag + ".recall.test", s.recall);
  }
  Reports reports{{"calibration", t}};
  write_reports(run.dir / "reports", reports);
  return reports;
}

Reports cmd_activations(const fs::path& run_dir) {
  const LoadedRun run = load_run(run_dir);
  std::vector<std::size_t> identity_items;
  for (auto id : run.world.nontarget_test) {
    const auto& imgs = run.world.identity_images[id];
    identity_items.insert(identity_items.end(), imgs.begin(), imgs.end());
  }
  const ActivationStats primary = activation_stats(run.model, run.world.gather(run.world.query_test));
  const ActivationStats faces = activation_stats(run.model, run.world.gather(identity_items));
  MetricTable t;
  t.add("cosine_distance.primary_vs_nontarget", cosine_distance(primary.mean, faces.mean));
  if (!run.world.targets.empty()) {
    const ActivationStats target = activation_stats(run.model, run.world.gather(run.world.targets[0].test));
    t.add("cosine_distance.primary_vs_target", cosine_distance(primary.mean, target.mean));
    for (Eigen::Index u = 0; u < target.clipped.size(); ++u) t.add("target.unit_" + std::to_string(u), target.clipped[u]);
  }
  for (Eigen::Index u = 0; u < primary.clipped.size(); ++u) t.add("primary_query.unit_" + std::to_string(u), primary.clipped[u]);
  for (Eigen::Index u = 0; u < faces.clipped.size(); ++u) t.add("nontarget.unit_" + std::to_string(u), faces.clipped[u]);
  Reports reports{{"activations", t}};
  write_reports(run.dir / "reports", reports);
  return reports;
}

Reports cmd_clean(const CleanOptions& options) {
  const std::vector<std::string> ids = read_id_list(options.items);
  OracleTables tables = load_oracle(options.oracle);
  CleaningResult result;
  if (!ids.empty()) {
    try {
      result = clean_individual(ids, face_oracle(std::move(tables.faces)), item_oracle(std::move(tables.embeddings)),
                                options.t_mis, options.t_dup);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  fs::create_directories(options.out);
  write_id_list(options.out / "mislabeled.txt", result.mislabeled);
  write_id_list(options.out / "duplicates.txt", result.duplicates);
  MetricTable t;
  t.add("items", static_cast<double>(ids.size()));
  t.add("mislabeled", static_cast<double>(result.mislabeled.size()));
  t.add("duplicates", static_cast<double>(result.duplicates.size()));
  t.add("kept", static_cast<double>(ids.size() - result.mislabeled.size() - result.duplicates.size()));
  t.add("T_mis", options.t_mis);
  t.add("T_dup", options.t_dup);
  Reports reports{{"clean_summary", t}};
  write_reports(options.out, reports);
  return reports;
}

}  // namespace duohash
