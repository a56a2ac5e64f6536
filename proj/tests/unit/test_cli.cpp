#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "itersr/cli.hpp"
#include "itersr/error.hpp"
#include "support.hpp"

using namespace itersr;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

// A tiny world keeps every command well under a second.
const std::vector<std::string> kSmall = {
    "--set", "world.width=6",       "--set", "world.height=6",       "--set", "world.codes=8",
    "--set", "world.tile=2",        "--set", "model.hidden_dim=8",   "--set", "train.batch=4",
    "--set", "train.iterations=10", "--set", "train.checkpoint_every=5", "--set", "synth.count=3",
    "--set", "schedule.T=4",
};

std::vector<std::string> cmd(std::string name, const fs::path& out, std::vector<std::string> extra = {}) {
  std::vector<std::string> args = {std::move(name), "--out", out.string(), "--seed", "4"};
  args.insert(args.end(), kSmall.begin(), kSmall.end());
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

std::vector<std::string> lines_of(const fs::path& path) {
  std::vector<std::string> lines;
  std::istringstream in(test::slurp(path));
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) fields.push_back(f);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::size_t count_files(const fs::path& dir, std::string_view suffix) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) n += e.path().filename().string().ends_with(suffix);
  return n;
}

/// Shared trained run: a dataset plus a 10-step checkpoint.
struct Fixture {
  fs::path data;
  fs::path ckpt;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    const auto root = test::fresh_dir("cli_fixture");
    Fixture fx{root / "data", root / "train" / "final.bin"};
    REQUIRE(run(cmd("synth", fx.data)).code == 0);
    REQUIRE(run(cmd("train", root / "train")).code == 0);
    return fx;
  }();
  return f;
}

std::vector<std::string> sample_args(std::string name, const fs::path& out, std::vector<std::string> extra = {}) {
  const auto& fx = fixture();
  extra.insert(extra.begin(), {"--checkpoint", fx.ckpt.string(), "--input", fx.data.string()});
  return cmd(std::move(name), out, std::move(extra));
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("synth writes four files per item plus the manifest") {
    const auto dir = test::fresh_dir("synth_one");
    auto args = cmd("synth", dir, {"--set", "synth.count=1"});
    REQUIRE(run(args).code == 0);
    std::size_t files = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir)) ++files;
    CHECK(files == 5);
    CHECK(fs::exists(dir / "manifest.json"));
    CHECK(fs::exists(dir / "item_0000_hq_tokens.csv"));
    CHECK(fs::exists(dir / "item_0000_lq.pgm"));
    const auto m = RunManifest::read(dir / "manifest.json");
    CHECK(m.command == "synth");
    CHECK(m.seed == 4);
    CHECK(m.outputs.size() == 4);
    CHECK(m.config.at("world.width") == "6");
    CHECK(m.config.size() == Config::defaults().size());
  }

  TEST_CASE("synth is deterministic in the seed and produces smooth grids") {
    const auto a = test::fresh_dir("synth_a");
    const auto b = test::fresh_dir("synth_b");
    const auto c = test::fresh_dir("synth_c");
    const std::vector<std::string> big = {"--set", "world.width=16", "--set", "world.height=16", "--set",
                                          "world.codes=16", "--set", "synth.count=4"};
    REQUIRE(run(cmd("synth", a, big)).code == 0);
    REQUIRE(run(cmd("synth", b, big)).code == 0);
    auto other = cmd("synth", c, big);
    other[4] = "5";
    REQUIRE(run(other).code == 0);
    for (const auto& e : fs::directory_iterator(a)) {
      CHECK(test::slurp(e.path()) == test::slurp(b / e.path().filename()));
    }
    CHECK(test::slurp(a / "item_0000_hq_tokens.csv") != test::slurp(c / "item_0000_hq_tokens.csv"));
    for (int i = 0; i < 4; ++i) {
      char name[64];
      std::snprintf(name, sizeof name, "item_%04d_hq_tokens.csv", i);
      const auto tokens = read_token_csv(a / name);
      CHECK(neighbor_agreement(tokens) > 2.0 / 16);
      CHECK(std::ranges::adjacent_find(tokens.tokens, std::not_equal_to<>{}) != tokens.tokens.end());
    }
  }

  TEST_CASE("train logs one row per iteration and prints progress") {
    const auto dir = test::fresh_dir("cli_train");
    const auto r = run(cmd("train", dir));
    REQUIRE(r.code == 0);
    CHECK(lines_of(dir / "log.csv").size() == 11);
    CHECK(fs::exists(dir / "ckpt_00000005.bin"));
    CHECK(fs::exists(dir / "ckpt_00000010.bin"));
    CHECK(fs::exists(dir / "final.bin"));
    CHECK(r.out.find("step 10") != std::string::npos);
  }

  TEST_CASE("train resumes from a checkpoint") {
    const auto full = test::fresh_dir("cli_resume_full");
    REQUIRE(run(cmd("train", full)).code == 0);
    const auto part = test::fresh_dir("cli_resume_part");
    REQUIRE(run(cmd("train", part, {"--resume", (full / "ckpt_00000005.bin").string()})).code == 0);
    const auto a = lines_of(full / "log.csv");
    const auto b = lines_of(part / "log.csv");
    REQUIRE(b.size() == 6);
    for (std::size_t i = 1; i < b.size(); ++i) CHECK(b[i] == a[i + 5]);
    CHECK(test::slurp(full / "final.bin") == test::slurp(part / "final.bin"));
    const auto m = RunManifest::read(part / "manifest.json");
    REQUIRE(m.inputs.size() == 1);
    CHECK(m.inputs[0].second == git_blob_hash(full / "ckpt_00000005.bin"));
  }

  TEST_CASE("unknown config keys fail with the key named") {
    const auto dir = test::fresh_dir("cli_bad_key");
    auto r = run(cmd("train", dir, {"--set", "train.itreations=5"}));
    CHECK(r.code != 0);
    CHECK(r.err.find("train.itreations") != std::string::npos);

    std::ofstream(dir / "bad.cfg") << "# comment\nworld.colour = 3\n";
    r = run(cmd("synth", dir / "out", {"--config", (dir / "bad.cfg").string()}));
    CHECK(r.code != 0);
    CHECK(r.err.find("world.colour") != std::string::npos);

    r = run({"bogus"});
    CHECK(r.code != 0);
    r = run(cmd("train", dir, {"--set", "train.batch=zero"}));
    CHECK(r.code != 0);
    CHECK(r.err.find("train.batch") != std::string::npos);
  }

  TEST_CASE("config precedence: defaults < file < --set < flags") {
    const auto dir = test::fresh_dir("cli_precedence");
    std::ofstream(dir / "a.cfg") << "seed = 9\nworld.width = 7\nworld.height = 5\nsynth.count = 2\n";
    auto args = std::vector<std::string>{"synth",          "--out",          (dir / "o").string(),
                                         "--config",       (dir / "a.cfg").string(), "--set",
                                         "world.width=8",  "--set",          "seed=11",
                                         "--seed",         "12"};
    REQUIRE(run(args).code == 0);
    const auto m = RunManifest::read(dir / "o" / "manifest.json");
    CHECK(m.seed == 12);
    CHECK(m.config.at("world.width") == "8");
    CHECK(m.config.at("world.height") == "5");
    CHECK(m.config.at("world.codes") == "32");
    CHECK(m.outputs.size() == 8);
  }

  TEST_CASE("sample without adaptive start dumps T steps") {
    const auto dir = test::fresh_dir("cli_sample_full");
    const auto r = run(sample_args("sample", dir, {"--set", "sample.adaptive=false"}));
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto rows = lines_of(dir / "metrics.csv");
    REQUIRE(rows.size() == 4);
    CHECK(rows[0] ==
          "input,start_step,trusted,steps,token_acc_before,token_acc_after,psnr_before,psnr_after,ssim_before,"
          "ssim_after,dispersion");
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const auto f = split(rows[i]);
      REQUIRE(f.size() == 11);
      CHECK(f[1] == "4");
      CHECK(f[3] == "4");
      CHECK_FALSE(f[4].empty());
      CHECK_FALSE(f[7].empty());
    }
    CHECK(count_files(dir / "item_0000" / "trajectory", "_mask.pgm") == 4);
    CHECK(fs::exists(dir / "item_0000" / "before.pgm"));
    CHECK(fs::exists(dir / "item_0002" / "after.pgm"));
  }

  TEST_CASE("a confident evaluator trusts every cell and runs a single step") {
    const auto dir = test::fresh_dir("cli_sample_trusted");
    auto loaded = load_checkpoint(fixture().ckpt);
    for (auto& v : loaded.model.evaluate.at("b_out").value) v = 40.0;
    for (auto& t : loaded.model.evaluate.tensors()) {
      if (t.name.starts_with("w")) std::ranges::fill(t.value, 0.0);
    }
    save_checkpoint(loaded.model, dir / "trusting.bin", loaded.extras);
    const auto r = run(cmd("sample", dir / "out",
                           {"--checkpoint", (dir / "trusting.bin").string(), "--input", fixture().data.string()}));
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(count_files(dir / "out" / "item_0001" / "trajectory", "_mask.pgm") == 1);
    const auto f = split(lines_of(dir / "out" / "metrics.csv")[1]);
    CHECK(f[1] == "1");
    CHECK(f[2] == "36");
  }

  TEST_CASE("sample accepts a single LQ image without ground truth") {
    const auto dir = test::fresh_dir("cli_sample_single");
    fs::copy_file(fixture().data / "item_0000_lq.pgm", dir / "lonely_lq.pgm");
    const auto r = run(cmd("sample", dir / "out",
                           {"--checkpoint", fixture().ckpt.string(), "--input", (dir / "lonely_lq.pgm").string(),
                            "--set", "sample.dump_trajectory=false"}));
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto rows = lines_of(dir / "out" / "metrics.csv");
    REQUIRE(rows.size() == 2);
    const auto f = split(rows[1]);
    CHECK(f[0] == "lonely");
    CHECK(f[4].empty());
    CHECK(f[7].empty());
    CHECK_FALSE(fs::exists(dir / "out" / "lonely" / "trajectory"));
  }

  TEST_CASE("sample reports missing inputs") {
    const auto dir = test::fresh_dir("cli_sample_missing");
    auto r = run(cmd("sample", dir, {"--input", fixture().data.string()}));
    CHECK(r.code != 0);
    CHECK(r.err.find("checkpoint") != std::string::npos);
    r = run(cmd("sample", dir, {"--checkpoint", fixture().ckpt.string(), "--input", (dir / "nope").string()}));
    CHECK(r.code != 0);
  }

  TEST_CASE("ablate compares strategies on identical draws") {
    const auto dir = test::fresh_dir("cli_ablate");
    const auto r = run(sample_args("ablate", dir, {"--strategies", "evaluator,topk,evaluator"}));
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto rows = lines_of(dir / "ablate.csv");
    REQUIRE(rows.size() == 1 + 3 * 3);
    CHECK(rows[0] == "strategy,selection,input,start_step,token_acc,psnr,dispersion");
    for (int i = 1; i <= 3; ++i) CHECK(rows[i] == rows[i + 6]);
    for (int i = 1; i <= 3; ++i) {
      CHECK(split(rows[i])[3] == split(rows[i + 3])[3]);
      CHECK(split(rows[i + 3])[0] == "topk");
    }
    const auto check = lines_of(dir / "dispersion_check.csv");
    REQUIRE(check.size() == 2);
    CHECK(split(check[1])[2] == "true");
    CHECK(run(sample_args("ablate", dir / "bad", {"--strategies", "random"})).code != 0);
  }

  TEST_CASE("dispersion of a compact block is below that of uniform cells") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) CHECK(dispersion_sanity(16, 16, 64, seed).holds());
    CHECK_THROWS_AS(dispersion_sanity(4, 4, 1, 0), Error);
  }

  TEST_CASE("sweep-alpha writes one row per alpha with monotone start steps") {
    const auto dir = test::fresh_dir("cli_sweep");
    auto r = run(sample_args("sweep-alpha", dir / "one", {"--alphas", "0.5"}));
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(lines_of(dir / "one" / "sweep.csv").size() == 2);
    CHECK(lines_of(dir / "one" / "sweep.csv")[0] == "alpha,mean_start_step,psnr,token_acc");

    r = run(sample_args("sweep-alpha", dir / "many", {"--alphas", "0.9,0.1,0.3,0.5,0.7"}));
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto rows = lines_of(dir / "many" / "sweep.csv");
    REQUIRE(rows.size() == 6);
    double previous_alpha = 0.0, previous_ts = 0.0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const auto f = split(rows[i]);
      const double alpha = std::stod(f[0]);
      const double ts = std::stod(f[1]);
      CHECK(alpha > previous_alpha);
      CHECK(ts >= previous_ts);
      previous_alpha = alpha;
      previous_ts = ts;
    }
    CHECK(run(sample_args("sweep-alpha", dir / "bad", {"--alphas", "0.5,1.2"})).code != 0);
    CHECK(run(sample_args("sweep-alpha", dir / "zero", {"--alphas", "0"})).code != 0);

    const auto defaults = Config().get_doubles("sweep.alphas");
    CHECK(std::ranges::find(defaults, 0.5) != defaults.end());
  }

  TEST_CASE("re-running from a manifest reproduces every output") {
    const auto dir = test::fresh_dir("cli_manifest");
    REQUIRE(run(sample_args("sample", dir / "first")).code == 0);
    fs::create_directories(dir / "second");
    fs::copy_file(dir / "first" / "manifest.json", dir / "second" / "manifest.json");
    const auto r = run({"sample", "--manifest", (dir / "second" / "manifest.json").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    std::size_t compared = 0;
    for (const auto& e : fs::recursive_directory_iterator(dir / "first")) {
      if (!e.is_regular_file()) continue;
      const auto rel = fs::relative(e.path(), dir / "first");
      CHECK_MESSAGE(test::slurp(e.path()) == test::slurp(dir / "second" / rel), rel.string());
      ++compared;
    }
    CHECK(compared > 10);
    CHECK(run({"train", "--manifest", (dir / "second" / "manifest.json").string()}).code != 0);
  }

  TEST_CASE("manifest JSON round trips and git blob hashes match git") {
    RunManifest m;
    m.command = "train";
    m.seed = 17;
    m.config = {{"a", "1"}, {"b", "x y"}};
    m.inputs = {{"p/q", "abc"}};
    m.outputs = {"log.csv"};
    const auto back = RunManifest::from_json(m.to_json());
    CHECK(back.to_json() == m.to_json());
    CHECK_THROWS_AS(RunManifest::from_json("{"), Error);

    const auto dir = test::fresh_dir("blob");
    std::ofstream(dir / "empty").close();
    CHECK(git_blob_hash(dir / "empty") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
    std::ofstream(dir / "hello") << "hello\n";
    CHECK(git_blob_hash(dir / "hello") == "ce013625030ba8dba906f756967f9e9ca394464a");
  }
}
