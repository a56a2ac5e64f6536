#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "itersr/config.hpp"
#include "itersr/imaging.hpp"
#include "itersr/sampler.hpp"
#include "itersr/token_core.hpp"

namespace itersr {

/// Record written before a command does any work. Re-running the command from
/// it reproduces every output byte for byte.
struct RunManifest {
  std::string command;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> config;
  std::vector<std::pair<std::string, std::string>> inputs;  // path, git blob hash
  std::vector<std::string> outputs;                         // relative to the run directory

  std::string to_json() const;
  static RunManifest from_json(const std::string& text);
  void write(const std::filesystem::path& path) const;
  static RunManifest read(const std::filesystem::path& path);
};

/// SHA-1 of "blob <size>\0" + contents, as `git hash-object` prints it.
std::string git_blob_hash(const std::filesystem::path& file);

/// Trained model together with the codebook it was trained against.
struct LoadedRun {
  Model model;
  Codebook codebook;
  int tile = 0;
};

LoadedRun load_run(const std::filesystem::path& checkpoint);

/// One image to restore; ground truth is optional.
struct SampleInput {
  std::string name;
  Image lq_image;
  std::optional<Image> hq_image;
  std::optional<TokenGrid> hq_tokens;
};

/// A dataset directory written by `synth` (every *_lq.pgm / *_lq.ppm, sorted)
/// or a single LQ image file.
std::vector<SampleInput> load_inputs(const std::filesystem::path& path);
std::vector<std::filesystem::path> input_files(const std::filesystem::path& path);

/// Outcome of restoring one input.
struct Restoration {
  TokenGrid restored;  // S_l
  SampleResult result;
  Image before;        // decoded S_l, color corrected
  Image after;         // decoded S_0, color corrected
  double token_acc_before = 0.0;
  double token_acc_after = 0.0;
  double psnr_before = 0.0;
  double psnr_after = 0.0;
  double ssim_before = 0.0;
  double ssim_after = 0.0;
  bool has_tokens = false;
  bool has_image = false;
};

Restoration restore_input(const LoadedRun& run, const SampleInput& input, const SampleConfig& config);

/// Seed of input `index` below the sample stream, shared by every strategy and
/// alpha so comparisons see identical draws.
std::uint64_t input_seed(const SampleConfig& config, std::size_t index);

struct DispersionCheck {
  double clustered = 0.0;
  double uniform = 0.0;
  bool holds() const { return clustered < uniform; }
};

/// Dispersion of a compact block of k cells vs. k uniformly drawn cells.
DispersionCheck dispersion_sanity(int width, int height, int k, std::uint64_t seed);

void cmd_synth(const Config& cfg, const std::filesystem::path& out);
void cmd_train(const Config& cfg, const std::filesystem::path& out, std::ostream& log);
void cmd_sample(const Config& cfg, const std::filesystem::path& out);
void cmd_ablate(const Config& cfg, const std::filesystem::path& out);
void cmd_sweep_alpha(const Config& cfg, const std::filesystem::path& out);

/// Full command line (without the program name). Returns the process exit code;
/// errors are reported on `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace itersr
