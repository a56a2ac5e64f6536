#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "itersr/diffusion.hpp"
#include "itersr/nets.hpp"
#include "itersr/rng.hpp"
#include "itersr/schedule.hpp"

namespace itersr {

/// Scores the next-step token distribution of every cell.
class TokenRefiner {
 public:
  virtual ~TokenRefiner() = default;
  virtual LogitGrid logits(const DiffusionState& state, const TokenGrid& restored) const = 0;
};

/// Probability, per cell, that the token matches the ground truth.
class TokenEvaluator {
 public:
  virtual ~TokenEvaluator() = default;
  virtual std::vector<double> probabilities(const TokenGrid& tokens) const = 0;
};

/// Adapters over a trained Model.
class ModelRefiner final : public TokenRefiner {
 public:
  explicit ModelRefiner(const Model& model) : model_(&model) {}
  LogitGrid logits(const DiffusionState& state, const TokenGrid& restored) const override;

 private:
  const Model* model_;
};

class ModelEvaluator final : public TokenEvaluator {
 public:
  explicit ModelEvaluator(const Model& model) : model_(&model) {}
  std::vector<double> probabilities(const TokenGrid& tokens) const override;

 private:
  const Model* model_;
};

enum class Strategy { evaluator, topk };
enum class Selection { stochastic, deterministic };

Strategy parse_strategy(std::string_view text);
Selection parse_selection(std::string_view text);
std::string to_string(Strategy s);
std::string to_string(Selection s);

struct SampleConfig {
  ScheduleSpec schedule;
  double alpha = 0.5;
  Strategy strategy = Strategy::evaluator;
  Selection selection = Selection::stochastic;
  double temperature = 1.0;
  bool adaptive = true;
  std::uint64_t seed = 0;
};

void validate(const SampleConfig& config);

struct StartStep {
  int step = 1;
  MaskGrid trusted;  // m_s
};

/// Largest t in [1, T] whose unmask count is >= the trusted count, found by
/// decrementing from T.
int start_step_for_count(const ScheduleSpec& spec, int cells, int trusted);

/// m_s[i] = 1 iff p_e(cell i) >= alpha; T_s from start_step_for_count.
StartStep select_start_step(const TokenGrid& restored, const TokenEvaluator& evaluator, double alpha,
                            const ScheduleSpec& spec);
StartStep select_start_step(const TokenGrid& restored, std::span<const double> probabilities, double alpha,
                            const ScheduleSpec& spec);

/// S_t = m_s * S_l + (1 - m_s) * MASK, m_t = m_s.
DiffusionState adaptive_init(const TokenGrid& restored, const MaskGrid& trusted, Token mask_id);

struct Refined {
  TokenGrid tokens;
  LogitGrid logits;
};

/// Draws every cell from softmax(logits / temperature), or takes the argmax in
/// deterministic mode.
Refined refine_step(const DiffusionState& state, const TokenGrid& restored, const TokenRefiner& refiner,
                    double temperature, Selection selection, Rng& rng);

/// Exactly k cells. Deterministic: k highest scores, ties to the lowest index.
/// Stochastic: k draws without replacement proportional to the scores
/// (Gumbel-top-k on log scores).
MaskGrid select_cells(std::span<const double> scores, int width, int height, int k, Selection selection, Rng& rng);

MaskGrid evaluator_select(const TokenGrid& refined, const TokenEvaluator& evaluator, int k, Selection selection,
                          Rng& rng);

/// Keeps every committed cell, then fills the remaining k - committed slots
/// with the uncommitted cells of highest refiner confidence (softmax
/// probability of the chosen token). Ties go to the lowest index.
MaskGrid topk_select(const TokenGrid& refined, const LogitGrid& refiner_logits, const MaskGrid& committed, int k);

struct TrajectoryStep {
  int t = 0;               // reverse step that produced this state
  DiffusionState state;    // S_{t-1} after re-masking
  MaskGrid selected;       // m_{t-1}
  MaskGrid newly_selected; // cells selected now but not kept before
};

struct Trajectory {
  int start_step = 0;
  int trusted_count = 0;
  Strategy strategy = Strategy::evaluator;
  Selection selection = Selection::stochastic;
  std::vector<TrajectoryStep> steps;
};

struct SampleResult {
  TokenGrid tokens;  // S_0
  Trajectory trajectory;
};

/// Reverse process from T_s down to 1: refine, select k(t) cells, re-mask.
SampleResult sample(const TokenGrid& restored, const TokenRefiner& refiner, const TokenEvaluator& evaluator,
                    const SampleConfig& config, Token mask_id);

/// Mean pairwise Euclidean distance between the given cells; 0 for fewer than two.
double pairwise_dispersion(const MaskGrid& cells);

/// Mean over steps (with at least two newly selected cells) of the pairwise
/// dispersion of newly selected cells. Low values mean spatially clustered
/// selections.
double mask_dispersion(const Trajectory& trajectory);

/// One PGM mask + one token CSV per step, plus meta.json with the config and T_s.
void dump_trajectory(const Trajectory& trajectory, const SampleConfig& config, const std::filesystem::path& dir);

void write_token_csv(const TokenGrid& tokens, const std::filesystem::path& path);
TokenGrid read_token_csv(const std::filesystem::path& path);

}  // namespace itersr
