#include "itersr/cli.hpp"

#include <CLI11.hpp>
#include <ostream>

#include "itersr/error.hpp"

namespace itersr {

namespace {

struct CommonOptions {
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::string out;
  std::string manifest;
  std::vector<std::string> overrides;
  // Command-specific shortcuts for config keys.
  std::string checkpoint;
  std::string input;
  std::string resume;
  std::string strategies;
  std::string alphas;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_file, "flat key = value config file");
  cmd->add_option("--seed", o.seed, "run seed (dataset/train/sample streams derive from it)");
  cmd->add_option("--out", o.out, "output run directory");
  cmd->add_option("--threads", o.threads, "worker threads (0 = all cores)");
  cmd->add_option("--set", o.overrides, "override a config key: key=value (repeatable)");
  cmd->add_option("--manifest", o.manifest, "re-run from a manifest.json written by an earlier run");
}

/// Defaults, then config file, then --set, then dedicated flags.
Config resolve(const std::string& command, const CommonOptions& o, std::filesystem::path& out) {
  Config cfg;
  if (!o.manifest.empty()) {
    const auto m = RunManifest::read(o.manifest);
    require(m.command == command, "manifest " + o.manifest + " was written by '" + m.command + "', not '" + command + "'");
    for (const auto& [k, v] : m.config) cfg.set(k, v);
    for (const auto& [path, hash] : m.inputs) {
      require(std::filesystem::exists(path), "manifest input missing: " + path);
      require(git_blob_hash(path) == hash, "manifest input changed since the run: " + path);
    }
    if (o.out.empty()) out = std::filesystem::path(o.manifest).parent_path();
  }
  if (!o.config_file.empty()) cfg.load_file(o.config_file);
  for (const auto& kv : o.overrides) cfg.apply_override(kv);
  if (o.seed) cfg.set("seed", std::to_string(*o.seed));
  if (o.threads) cfg.set("threads", std::to_string(*o.threads));
  if (!o.checkpoint.empty()) cfg.set("sample.checkpoint", o.checkpoint);
  if (!o.input.empty()) cfg.set("sample.input", o.input);
  if (!o.resume.empty()) cfg.set("train.resume", o.resume);
  if (!o.strategies.empty()) cfg.set("ablate.strategies", o.strategies);
  if (!o.alphas.empty()) cfg.set("sweep.alphas", o.alphas);
  if (!o.out.empty()) out = o.out;
  if (out.empty()) out = "run";
  return cfg;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Token-grid restoration with evaluator-guided refinement", "itersr"};
  app.require_subcommand(1);
  CommonOptions o;

  auto* synth = app.add_subcommand("synth", "write a synthetic HQ/LQ dataset");
  auto* train_cmd = app.add_subcommand("train", "train E_l, the refiner and the evaluator jointly");
  auto* sample_cmd = app.add_subcommand("sample", "restore LQ images with the trained sampler");
  auto* ablate = app.add_subcommand("ablate", "compare selection strategies on the same inputs and seeds");
  auto* sweep = app.add_subcommand("sweep-alpha", "sweep the adaptive threshold alpha");
  for (auto* cmd : {synth, train_cmd, sample_cmd, ablate, sweep}) add_common(cmd, o);
  train_cmd->add_option("--resume", o.resume, "checkpoint to resume from");
  for (auto* cmd : {sample_cmd, ablate, sweep}) {
    cmd->add_option("--checkpoint", o.checkpoint, "trained checkpoint");
    cmd->add_option("--input", o.input, "dataset directory or single LQ image");
  }
  ablate->add_option("--strategies", o.strategies, "comma-separated strategies (evaluator, topk)");
  sweep->add_option("--alphas", o.alphas, "comma-separated alpha values in (0, 1)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code;
  }

  try {
    std::filesystem::path dir;
    if (synth->parsed()) {
      cmd_synth(resolve("synth", o, dir), dir);
    } else if (train_cmd->parsed()) {
      cmd_train(resolve("train", o, dir), dir, out);
    } else if (sample_cmd->parsed()) {
      cmd_sample(resolve("sample", o, dir), dir);
    } else if (ablate->parsed()) {
      cmd_ablate(resolve("ablate", o, dir), dir);
    } else if (sweep->parsed()) {
      cmd_sweep_alpha(resolve("sweep-alpha", o, dir), dir);
    }
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace itersr
