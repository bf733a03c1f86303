#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "duohash/commands.hpp"
#include "duohash/error.hpp"

using namespace duohash;

namespace {

struct Common {
  std::vector<std::uint64_t> seeds;
  std::string config;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seeds, "run seed(s), comma separated")->delimiter(',')->envname("DUOHASH_SEED");
  cmd->add_option("--config", c.config, "JSON config file")->envname("DUOHASH_CONFIG");
  cmd->add_option("--out", c.out, "output or run directory")->envname("DUOHASH_OUT");
}

RunConfig resolve_config(const Common& c) {
  RunConfig config = c.config.empty() ? RunConfig{} : load_config(c.config);
  if (!c.seeds.empty()) config.seed = c.seeds.front();
  return config;
}

fs::path run_dir(const std::string& positional, const Common& c) {
  if (!positional.empty()) return positional;
  if (!c.out.empty()) return c.out;
  throw ConfigError("no run directory given (pass it as an argument or with --out)");
}

void print(const Reports& reports) {
  for (const auto& [name, table] : reports) {
    std::cout << "== " << name << "\n";
    for (const auto& [row, value] : table.rows()) std::cout << row << "," << format_double(value) << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"duohash: dual-purpose perceptual hashing toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  Common common;

  auto* train = app.add_subcommand("train", "train a model and write a run directory");
  add_common(train, common);
  std::string mode = "dual";
  std::size_t targets = 1;
  int jobs = 1;
  train->add_option("--mode", mode, "single, dual or multi")->envname("DUOHASH_MODE");
  train->add_option("--targets", targets, "target individuals (multi mode)")->envname("DUOHASH_TARGETS");
  train->add_option("--jobs", jobs, "parallel seed runs")->envname("DUOHASH_JOBS");

  std::string run;
  std::string threshold = "p90";
  bool lsh = false;

  auto* eval = app.add_subcommand("eval", "ICD and recognition reports on the test split");
  add_common(eval, common);
  std::string task = "both";
  eval->add_option("run", run, "run directory");
  eval->add_option("--task", task, "icd, fr or both");
  eval->add_option("--threshold", threshold, "p90, p95 or p99")->envname("DUOHASH_THRESHOLD");
  eval->add_flag("--lsh", lsh, "binarize hashes with LSH");

  auto* simulate = app.add_subcommand("simulate", "client-side scanning study");
  add_common(simulate, common);
  std::vector<std::size_t> ks;
  bool forge = false;
  simulate->add_option("run", run, "run directory");
  simulate->add_option("--templates", ks, "template counts k, comma separated")->delimiter(',');
  simulate->add_option("--threshold", threshold, "p90, p95 or p99")->envname("DUOHASH_THRESHOLD");
  simulate->add_flag("--lsh", lsh, "binarize hashes with LSH");
  simulate->add_flag("--forge", forge, "add the collision forging study");

  auto* forge_cmd = app.add_subcommand("forge", "forge colliding items against the k=1 template");
  add_common(forge_cmd, common);
  int forge_count = 0;
  forge_cmd->add_option("run", run, "run directory");
  forge_cmd->add_option("--count", forge_count, "forging seeds 1..N");
  forge_cmd->add_option("--threshold", threshold, "p90, p95 or p99")->envname("DUOHASH_THRESHOLD");

  auto* calibrate = app.add_subcommand("calibrate", "thresholds at 90/95/99% validation precision");
  add_common(calibrate, common);
  calibrate->add_option("run", run, "run directory");

  auto* activations = app.add_subcommand("activations", "mean penultimate activations");
  add_common(activations, common);
  activations->add_option("run", run, "run directory");

  auto* clean = app.add_subcommand("clean", "mislabel and duplicate exclusion lists");
  add_common(clean, common);
  std::string items, oracle;
  std::optional<double> t_mis, t_dup;
  clean->add_option("--items", items, "newline-delimited item ids")->required();
  clean->add_option("--oracle", oracle, "JSON face/embedding oracle")->required();
  clean->add_option("--t-mis", t_mis, "mislabel threshold");
  clean->add_option("--t-dup", t_dup, "duplicate threshold");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (train->parsed()) {
      RunConfig config = resolve_config(common);
      apply_mode(config, parse_mode(mode), targets);
      TrainOptions o;
      o.config = config;
      o.out = common.out.empty() ? fs::path("runs") / mode : fs::path(common.out);
      o.seeds = common.seeds;
      o.jobs = jobs;
      o.log = &std::cerr;
      for (const auto& dir : cmd_train(o)) std::cout << dir.string() << "\n";
    } else if (eval->parsed()) {
      EvalOptions o;
      o.run_dir = run_dir(run, common);
      o.task = parse_eval_task(task);
      o.threshold_spec = threshold;
      o.lsh = lsh;
      print(cmd_eval(o));
    } else if (simulate->parsed()) {
      SimulateOptions o;
      o.run_dir = run_dir(run, common);
      o.k_sweep = ks;
      o.lsh = lsh;
      o.forge = forge;
      o.threshold_spec = threshold;
      print(cmd_simulate(o));
    } else if (forge_cmd->parsed()) {
      ForgeCommandOptions o;
      o.run_dir = run_dir(run, common);
      o.seeds = forge_count;
      o.threshold_spec = threshold;
      print(cmd_forge(o));
    } else if (calibrate->parsed()) {
      print(cmd_calibrate(run_dir(run, common)));
    } else if (activations->parsed()) {
      print(cmd_activations(run_dir(run, common)));
    } else if (clean->parsed()) {
      const RunConfig config = resolve_config(common);
      CleanOptions o;
      o.items = items;
      o.oracle = oracle;
      o.t_mis = t_mis.value_or(config.clean.t_mis);
      o.t_dup = t_dup.value_or(config.clean.t_dup);
      o.out = common.out.empty() ? fs::path("clean") : fs::path(common.out);
      print(cmd_clean(o));
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
