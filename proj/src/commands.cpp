#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "itersr/cli.hpp"
#include "itersr/error.hpp"
#include "itersr/parallel.hpp"
#include "itersr/rng.hpp"
#include "itersr/toy_world.hpp"
#include "itersr/trainer.hpp"

namespace itersr {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

// ---------------------------------------------------------------- manifest

std::string RunManifest::to_json() const {
  ordered_json j;
  j["command"] = command;
  j["seed"] = seed;
  j["config"] = ordered_json::object();
  for (const auto& [k, v] : config) j["config"][k] = v;
  j["inputs"] = ordered_json::array();
  for (const auto& [path, hash] : inputs) j["inputs"].push_back({{"path", path}, {"hash", hash}});
  j["outputs"] = outputs;
  return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(const std::string& text) {
  RunManifest m;
  try {
    const auto j = ordered_json::parse(text);
    m.command = j.at("command").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& [k, v] : j.at("config").items()) m.config[k] = v.get<std::string>();
    for (const auto& in : j.at("inputs")) {
      m.inputs.emplace_back(in.at("path").get<std::string>(), in.at("hash").get<std::string>());
    }
    m.outputs = j.at("outputs").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

void RunManifest::write(const fs::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), "cannot write manifest " + path.string());
  out << to_json();
  require(static_cast<bool>(out), "failed writing manifest " + path.string());
}

RunManifest RunManifest::read(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "cannot open manifest " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_json(buffer.str());
}

std::string git_blob_hash(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  require(static_cast<bool>(in), "cannot read " + file.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string body = buffer.str();
  const std::string header = "blob " + std::to_string(body.size()) + '\0';

  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  require(ctx != nullptr, "cannot allocate a hash context");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, body.data(), body.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, digest, &length) == 1;
  EVP_MD_CTX_free(ctx);
  require(ok, "hashing failed for " + file.string());

  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < length; ++i) {
    hex += kHex[digest[i] >> 4];
    hex += kHex[digest[i] & 15];
  }
  return hex;
}

namespace {

RunManifest make_manifest(std::string command, const Config& cfg) {
  RunManifest m;
  m.command = std::move(command);
  m.seed = cfg.get_u64("seed");
  for (const auto& [k, v] : cfg.values()) m.config[k] = v;
  return m;
}

void add_input(RunManifest& m, const fs::path& path) { m.inputs.emplace_back(path.string(), git_blob_hash(path)); }

/// Every file of a run directory is written from the calling thread through
/// this object; workers only compute.
class RunWriter {
 public:
  explicit RunWriter(fs::path root) : root_(std::move(root)) {
    std::error_code ec;
    fs::create_directories(root_, ec);
    require(!ec && fs::is_directory(root_), "cannot create output directory " + root_.string());
  }

  const fs::path& root() const { return root_; }

  fs::path prepare(const std::string& relative) const {
    const auto path = root_ / relative;
    if (path.has_parent_path()) {
      std::error_code ec;
      fs::create_directories(path.parent_path(), ec);
      require(!ec, "cannot create directory " + path.parent_path().string());
    }
    return path;
  }

  void text(const std::string& relative, const std::string& content) const {
    const auto path = prepare(relative);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), "cannot write " + path.string());
    out << content;
    require(static_cast<bool>(out), "failed writing " + path.string());
  }

  void image(const std::string& relative, const Image& img) const { write_pnm(img, prepare(relative)); }
  void tokens(const std::string& relative, const TokenGrid& grid) const { write_token_csv(grid, prepare(relative)); }
  void manifest(const RunManifest& m) const { m.write(root_ / "manifest.json"); }

 private:
  fs::path root_;
};

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string image_ext(int channels) { return channels == 1 ? ".pgm" : ".ppm"; }

std::string item_stem(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "item_%04zu", i);
  return buf;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

// ---------------------------------------------------------------- shared pieces

LoadedRun load_run(const fs::path& checkpoint) {
  require(!checkpoint.empty(), "no checkpoint given (set sample.checkpoint or --checkpoint)");
  require(fs::exists(checkpoint), "checkpoint not found: " + checkpoint.string());
  auto loaded = load_checkpoint(checkpoint);
  const auto* shape = loaded.extra("codebook.shape");
  const auto* entries = loaded.extra("codebook");
  require(shape && shape->size() == 3 && entries, "checkpoint " + checkpoint.string() + " carries no codebook");
  const int size = static_cast<int>((*shape)[0]);
  const int dim = static_cast<int>((*shape)[1]);
  const int tile = static_cast<int>((*shape)[2]);
  require(size == loaded.model.spec().num_codes, "checkpoint codebook size does not match the model");
  return {std::move(loaded.model), Codebook(size, dim, *entries), tile};
}

std::vector<fs::path> input_files(const fs::path& path) {
  require(fs::exists(path), "input not found: " + path.string());
  if (!fs::is_directory(path)) return {path};
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(path)) {
    const auto name = entry.path().filename().string();
    if (name.ends_with("_lq.pgm") || name.ends_with("_lq.ppm")) files.push_back(entry.path());
  }
  std::ranges::sort(files);
  require(!files.empty(), "no *_lq.pgm / *_lq.ppm images in " + path.string());
  return files;
}

namespace {

struct InputPaths {
  fs::path lq;
  std::optional<fs::path> hq;
  std::optional<fs::path> hq_tokens;
  std::string name;
};

InputPaths companion_paths(const fs::path& lq) {
  InputPaths p;
  p.lq = lq;
  std::string stem = lq.stem().string();
  if (stem.ends_with("_lq")) stem.resize(stem.size() - 3);
  p.name = stem;
  const auto dir = lq.parent_path();
  for (const char* ext : {".pgm", ".ppm"}) {
    const auto hq = dir / (stem + "_hq" + ext);
    if (fs::exists(hq)) p.hq = hq;
  }
  const auto tokens = dir / (stem + "_hq_tokens.csv");
  if (fs::exists(tokens)) p.hq_tokens = tokens;
  return p;
}

void add_inputs(RunManifest& m, const fs::path& path) {
  for (const auto& lq : input_files(path)) {
    const auto p = companion_paths(lq);
    add_input(m, p.lq);
    if (p.hq) add_input(m, *p.hq);
    if (p.hq_tokens) add_input(m, *p.hq_tokens);
  }
}

}  // namespace

std::vector<SampleInput> load_inputs(const fs::path& path) {
  std::vector<SampleInput> inputs;
  for (const auto& lq : input_files(path)) {
    const auto p = companion_paths(lq);
    SampleInput in;
    in.name = p.name;
    in.lq_image = read_pnm(p.lq);
    if (p.hq) in.hq_image = read_pnm(*p.hq);
    if (p.hq_tokens) in.hq_tokens = read_token_csv(*p.hq_tokens);
    inputs.push_back(std::move(in));
  }
  return inputs;
}

std::uint64_t input_seed(const SampleConfig& config, std::size_t index) {
  return derive_seed(config.seed, "input", index);
}

Restoration restore_input(const LoadedRun& run, const SampleInput& input, const SampleConfig& config) {
  const auto& spec = run.model.spec();
  const auto features = restoration_input(input.lq_image, run.codebook, run.tile, spec);
  Restoration r;
  r.restored = argmax_tokens(restoration_forward(run.model, features));
  const ModelRefiner refiner(run.model);
  const ModelEvaluator evaluator(run.model);
  r.result = sample(r.restored, refiner, evaluator, config, run.model.mask_id());
  r.before = color_correct(decode_tokens(r.restored, run.codebook, run.tile), input.lq_image);
  r.after = color_correct(decode_tokens(r.result.tokens, run.codebook, run.tile), input.lq_image);

  if (input.hq_tokens) {
    const auto& truth = *input.hq_tokens;
    require(truth.width == r.restored.width && truth.height == r.restored.height,
            "ground-truth tokens of " + input.name + " do not match the grid size");
    int before = 0;
    int after = 0;
    for (int c = 0; c < truth.cells(); ++c) {
      before += r.restored[c] == truth[c];
      after += r.result.tokens[c] == truth[c];
    }
    r.token_acc_before = static_cast<double>(before) / truth.cells();
    r.token_acc_after = static_cast<double>(after) / truth.cells();
    r.has_tokens = true;
  }
  if (input.hq_image) {
    r.psnr_before = psnr(r.before, *input.hq_image);
    r.psnr_after = psnr(r.after, *input.hq_image);
    r.ssim_before = ssim(r.before, *input.hq_image);
    r.ssim_after = ssim(r.after, *input.hq_image);
    r.has_image = true;
  }
  return r;
}

DispersionCheck dispersion_sanity(int width, int height, int k, std::uint64_t seed) {
  require(width >= 1 && height >= 1 && k >= 2 && k <= width * height, "dispersion check needs 2 <= k <= cells");
  const int cells = width * height;
  // Compact block: cells in order of distance from the grid centre.
  std::vector<int> order(static_cast<std::size_t>(cells));
  for (int i = 0; i < cells; ++i) order[i] = i;
  const double cx = (width - 1) / 2.0;
  const double cy = (height - 1) / 2.0;
  std::ranges::stable_sort(order, [&](int a, int b) {
    const double da = std::hypot(a % width - cx, a / width - cy);
    const double db = std::hypot(b % width - cx, b / width - cy);
    return da < db;
  });
  MaskGrid clustered(width, height);
  for (int i = 0; i < k; ++i) clustered.bits[static_cast<std::size_t>(order[i])] = 1;

  Rng rng(seed);
  std::vector<int> pool(static_cast<std::size_t>(cells));
  for (int i = 0; i < cells; ++i) pool[i] = i;
  MaskGrid uniform(width, height);
  for (int i = 0; i < k; ++i) {
    const auto j = static_cast<std::size_t>(i) + rng.below(static_cast<std::uint64_t>(cells - i));
    std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
    uniform.bits[static_cast<std::size_t>(pool[i])] = 1;
  }
  return {pairwise_dispersion(clustered), pairwise_dispersion(uniform)};
}

// ---------------------------------------------------------------- commands

void cmd_synth(const Config& cfg, const fs::path& out) {
  const auto wc = world_config(cfg);
  const auto count = cfg.get_int("synth.count");
  require(count >= 1, "synth.count must be >= 1");
  const std::uint64_t seed = dataset_seed(cfg.get_u64("seed"));
  const ToyWorld world(wc, seed);
  const std::string ext = image_ext(world.codebook().dim() / (wc.tile * wc.tile));

  RunWriter writer(out);
  auto manifest = make_manifest("synth", cfg);
  for (std::int64_t i = 0; i < count; ++i) {
    const auto stem = item_stem(static_cast<std::size_t>(i));
    manifest.outputs.push_back(stem + "_hq_tokens.csv");
    manifest.outputs.push_back(stem + "_hq" + ext);
    manifest.outputs.push_back(stem + "_lq" + ext);
    manifest.outputs.push_back(stem + "_lq_tokens.csv");
  }
  writer.manifest(manifest);

  std::vector<Example> examples(static_cast<std::size_t>(count));
  parallel_for(examples.size(), static_cast<unsigned>(cfg.get_int("threads")),
               [&](std::size_t i) { examples[i] = world.make_example(derive_seed(seed, "item", i)); });
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto stem = item_stem(i);
    writer.tokens(stem + "_hq_tokens.csv", examples[i].hq_tokens);
    writer.image(stem + "_hq" + ext, examples[i].hq_image);
    writer.image(stem + "_lq" + ext, examples[i].lq_image);
    writer.tokens(stem + "_lq_tokens.csv", examples[i].lq_tokens);
  }
}

void cmd_train(const Config& cfg, const fs::path& out, std::ostream& log) {
  const auto wc = world_config(cfg);
  const auto spec = model_spec(cfg);
  const auto tc = train_config(cfg);
  const ToyWorld world(wc, dataset_seed(cfg.get_u64("seed")));
  const auto& resume_text = cfg.get("train.resume");
  std::optional<fs::path> resume;
  if (!resume_text.empty()) {
    resume = fs::path(resume_text);
    require(fs::exists(*resume), "resume checkpoint not found: " + resume_text);
  }

  RunWriter writer(out);
  auto manifest = make_manifest("train", cfg);
  if (resume) add_input(manifest, *resume);
  manifest.outputs.push_back("log.csv");
  for (std::int64_t s = tc.checkpoint_every; s <= tc.iterations; s += tc.checkpoint_every) {
    char name[64];
    std::snprintf(name, sizeof name, "ckpt_%08lld.bin", static_cast<long long>(s));
    manifest.outputs.emplace_back(name);
  }
  manifest.outputs.push_back("final.bin");
  writer.manifest(manifest);

  const auto model = Model::initialized(spec, derive_seed(tc.seed, "init"));
  const auto report_every = std::max<std::int64_t>(1, tc.iterations / 10);
  const auto result = train(tc, world, model, writer.root(), resume, [&](const LossReport& r) {
    if (r.step % report_every == 0 || r.step == tc.iterations) {
      log << "step " << r.step << "  L_dist " << num(r.restoration) << "  L_r " << num(r.refiner) << "  L_e "
          << num(r.evaluator) << "  acc " << num(r.restoration_accuracy) << "\n";
    }
  });
  log << "wrote " << result.final_checkpoint.string() << "\n";
}

namespace {

struct SampleRun {
  LoadedRun run;
  std::vector<SampleInput> inputs;
};

SampleRun open_sample_run(const Config& cfg, RunManifest& manifest) {
  const fs::path checkpoint = cfg.get("sample.checkpoint");
  const fs::path input = cfg.get("sample.input");
  require(!input.empty(), "no input given (set sample.input or --input)");
  SampleRun s{load_run(checkpoint), load_inputs(input)};
  add_input(manifest, checkpoint);
  add_inputs(manifest, input);
  return s;
}

}  // namespace

void cmd_sample(const Config& cfg, const fs::path& out) {
  const auto config = sample_config(cfg);
  auto manifest = make_manifest("sample", cfg);
  const auto s = open_sample_run(cfg, manifest);
  const bool dump = cfg.get_bool("sample.dump_trajectory");

  RunWriter writer(out);
  manifest.outputs.push_back("metrics.csv");
  for (const auto& in : s.inputs) {
    const auto ext = image_ext(in.lq_image.channels);
    manifest.outputs.push_back(in.name + "/before" + ext);
    manifest.outputs.push_back(in.name + "/after" + ext);
    if (dump) manifest.outputs.push_back(in.name + "/trajectory/");
  }
  writer.manifest(manifest);

  std::vector<Restoration> results(s.inputs.size());
  parallel_for(results.size(), static_cast<unsigned>(cfg.get_int("threads")), [&](std::size_t i) {
    auto c = config;
    c.seed = input_seed(config, i);
    results[i] = restore_input(s.run, s.inputs[i], c);
  });

  std::ostringstream csv;
  csv << "input,start_step,trusted,steps,token_acc_before,token_acc_after,psnr_before,psnr_after,ssim_before,"
         "ssim_after,dispersion\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    const auto& name = s.inputs[i].name;
    const auto ext = image_ext(r.before.channels);
    writer.image(name + "/before" + ext, r.before);
    writer.image(name + "/after" + ext, r.after);
    if (dump) {
      auto c = config;
      c.seed = input_seed(config, i);
      dump_trajectory(r.result.trajectory, c, writer.prepare(name + "/trajectory/x").parent_path());
    }
    const auto& t = r.result.trajectory;
    csv << name << "," << t.start_step << "," << t.trusted_count << "," << t.steps.size() << ","
        << (r.has_tokens ? num(r.token_acc_before) : "") << "," << (r.has_tokens ? num(r.token_acc_after) : "") << ","
        << (r.has_image ? num(r.psnr_before) : "") << "," << (r.has_image ? num(r.psnr_after) : "") << ","
        << (r.has_image ? num(r.ssim_before) : "") << "," << (r.has_image ? num(r.ssim_after) : "") << ","
        << num(mask_dispersion(t)) << "\n";
  }
  writer.text("metrics.csv", csv.str());
}

void cmd_ablate(const Config& cfg, const fs::path& out) {
  const auto base = sample_config(cfg);
  std::vector<Strategy> strategies;
  for (const auto& name : cfg.get_list("ablate.strategies")) strategies.push_back(parse_strategy(name));
  require(!strategies.empty(), "ablate.strategies is empty");
  auto manifest = make_manifest("ablate", cfg);
  const auto s = open_sample_run(cfg, manifest);

  RunWriter writer(out);
  manifest.outputs = {"ablate.csv", "dispersion_check.csv"};
  writer.manifest(manifest);

  const std::size_t n = s.inputs.size();
  std::vector<Restoration> results(strategies.size() * n);
  parallel_for(results.size(), static_cast<unsigned>(cfg.get_int("threads")), [&](std::size_t job) {
    auto c = base;
    c.strategy = strategies[job / n];
    c.seed = input_seed(base, job % n);
    results[job] = restore_input(s.run, s.inputs[job % n], c);
  });

  std::ostringstream csv;
  csv << "strategy,selection,input,start_step,token_acc,psnr,dispersion\n";
  for (std::size_t job = 0; job < results.size(); ++job) {
    const auto& r = results[job];
    csv << to_string(strategies[job / n]) << "," << to_string(base.selection) << "," << s.inputs[job % n].name << ","
        << r.result.trajectory.start_step << "," << (r.has_tokens ? num(r.token_acc_after) : "") << ","
        << (r.has_image ? num(r.psnr_after) : "") << "," << num(mask_dispersion(r.result.trajectory)) << "\n";
  }
  writer.text("ablate.csv", csv.str());

  const auto& grid = results.front().restored;
  const int w = std::max(grid.width, 4);
  const int h = std::max(grid.height, 4);
  const auto check = dispersion_sanity(w, h, std::max(2, w * h / 4), derive_seed(base.seed, "dispersion-check"));
  writer.text("dispersion_check.csv", "clustered,uniform,holds\n" + num(check.clustered) + "," + num(check.uniform) +
                                          "," + (check.holds() ? "true" : "false") + "\n");
  require(check.holds(), "dispersion sanity check failed: clustered mask is not below the uniform mask");
}

void cmd_sweep_alpha(const Config& cfg, const fs::path& out) {
  const auto base = sample_config(cfg);
  auto alphas = cfg.get_doubles("sweep.alphas");
  require(!alphas.empty(), "sweep.alphas is empty");
  for (double a : alphas) {
    if (!(a > 0.0 && a < 1.0)) throw Error("alpha " + num(a) + " is outside (0, 1)");
  }
  std::ranges::sort(alphas);
  auto manifest = make_manifest("sweep-alpha", cfg);
  const auto s = open_sample_run(cfg, manifest);

  RunWriter writer(out);
  manifest.outputs = {"sweep.csv"};
  writer.manifest(manifest);

  const std::size_t n = s.inputs.size();
  std::vector<Restoration> results(alphas.size() * n);
  parallel_for(results.size(), static_cast<unsigned>(cfg.get_int("threads")), [&](std::size_t job) {
    auto c = base;
    c.alpha = alphas[job / n];
    c.seed = input_seed(base, job % n);
    results[job] = restore_input(s.run, s.inputs[job % n], c);
  });

  std::ostringstream csv;
  csv << "alpha,mean_start_step,psnr,token_acc\n";
  for (std::size_t a = 0; a < alphas.size(); ++a) {
    std::vector<double> ts, ps, acc;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& r = results[a * n + i];
      ts.push_back(r.result.trajectory.start_step);
      if (r.has_image) ps.push_back(r.psnr_after);
      if (r.has_tokens) acc.push_back(r.token_acc_after);
    }
    csv << num(alphas[a]) << "," << num(mean_of(ts)) << "," << (ps.empty() ? "" : num(mean_of(ps))) << ","
        << (acc.empty() ? "" : num(mean_of(acc))) << "\n";
  }
  writer.text("sweep.csv", csv.str());
}

}  // namespace itersr
