#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "itersr/losses.hpp"
#include "itersr/nets.hpp"
#include "itersr/schedule.hpp"
#include "itersr/toy_world.hpp"

namespace itersr {

/// What phi_e sees for the S_t term of its loss: masked cells replaced by
/// detached refiner samples, or left as the mask sentinel.
enum class EvaluatorInput { sampled, sentinel };

EvaluatorInput parse_evaluator_input(std::string_view text);
std::string to_string(EvaluatorInput mode);

struct TrainConfig {
  int batch = 16;
  std::int64_t iterations = 1000;
  std::uint64_t seed = 0;
  ScheduleSpec schedule;
  AdamConfig adam;
  double class_balance_beta = 0.9999;
  EvaluatorInput evaluator_input = EvaluatorInput::sampled;
  std::int64_t checkpoint_every = 1000;
  unsigned threads = 0;
  bool update_restore = true;
  bool update_refine = true;
  bool update_evaluate = true;
};

void validate(const TrainConfig& config);

/// One item of a training batch: E_l input and the clean tokens S_h.
struct TrainItem {
  CellFeatures restoration_input;
  TokenGrid hq_tokens;
};

/// One joint iteration: E_l on L_dist, phi_r on L_r over a freshly masked S_t
/// (r ~ U(0, 1]), phi_e on L_e (class-balanced S_l term), then one Adam step
/// per network that is not frozen. `step_seed` fixes every random draw.
LossReport train_step(Model& model, std::span<const TrainItem> batch, const TrainConfig& config,
                      std::uint64_t step_seed);

/// Deterministic batch for iteration `step` of a run seeded with `seed`.
std::vector<TrainItem> training_batch(const ToyWorld& world, const ModelSpec& spec, std::uint64_t seed,
                                      std::int64_t step, int batch);

/// Seed of the random draws inside iteration `step`.
std::uint64_t train_step_seed(std::uint64_t seed, std::int64_t step);

struct TrainResult {
  std::vector<LossReport> log;  // rows produced by this call
  std::filesystem::path final_checkpoint;
  std::int64_t completed_steps = 0;
};

using ProgressFn = std::function<void(const LossReport&)>;

/// Runs iterations until `config.iterations` are done. Appends one CSV row per
/// iteration to out_dir/log.csv, writes ckpt_<step>.bin every
/// `checkpoint_every` iterations and final.bin at the end. With `resume`, the
/// step counter, parameters and Adam state come from that checkpoint and the
/// log is truncated to the rows up to the resumed step.
TrainResult train(const TrainConfig& config, const ToyWorld& world, Model model, const std::filesystem::path& out_dir,
                  const std::optional<std::filesystem::path>& resume = std::nullopt, const ProgressFn& progress = {});

/// Checkpoint extras written by train().
std::vector<std::pair<std::string, std::vector<double>>> training_extras(const ToyWorld& world, std::int64_t next_step);

std::string log_header();
std::string log_row(const LossReport& report);

}  // namespace itersr
