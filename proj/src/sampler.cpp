#include "itersr/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "itersr/error.hpp"
#include "itersr/imaging.hpp"

namespace itersr {

LogitGrid ModelRefiner::logits(const DiffusionState& state, const TokenGrid& restored) const {
  return refiner_forward(*model_, state, restored);
}

std::vector<double> ModelEvaluator::probabilities(const TokenGrid& tokens) const {
  return evaluator_forward(*model_, tokens);
}

Strategy parse_strategy(std::string_view text) {
  if (text == "evaluator") return Strategy::evaluator;
  if (text == "topk") return Strategy::topk;
  throw Error("unknown strategy '" + std::string(text) + "' (expected evaluator or topk)");
}

Selection parse_selection(std::string_view text) {
  if (text == "stochastic") return Selection::stochastic;
  if (text == "deterministic") return Selection::deterministic;
  throw Error("unknown selection mode '" + std::string(text) + "' (expected stochastic or deterministic)");
}

std::string to_string(Strategy s) { return s == Strategy::evaluator ? "evaluator" : "topk"; }
std::string to_string(Selection s) { return s == Selection::stochastic ? "stochastic" : "deterministic"; }

void validate(const SampleConfig& config) {
  require(config.alpha > 0.0 && config.alpha < 1.0, "alpha must lie in (0, 1)");
  require(config.schedule.steps >= 1, "T must be >= 1");
  require(config.temperature > 0.0, "temperature must be > 0");
}

int start_step_for_count(const ScheduleSpec& spec, int cells, int trusted) {
  int step = spec.steps;
  while (step > 1 && unmask_count(spec, step, cells) < trusted) --step;
  return step;
}

StartStep select_start_step(const TokenGrid& restored, std::span<const double> probabilities, double alpha,
                            const ScheduleSpec& spec) {
  require(probabilities.size() == static_cast<std::size_t>(restored.cells()), "evaluator output shape mismatch");
  StartStep out{spec.steps, MaskGrid(restored.width, restored.height)};
  for (int i = 0; i < restored.cells(); ++i) out.trusted[i] = probabilities[static_cast<std::size_t>(i)] >= alpha;
  out.step = start_step_for_count(spec, restored.cells(), out.trusted.count());
  return out;
}

StartStep select_start_step(const TokenGrid& restored, const TokenEvaluator& evaluator, double alpha,
                            const ScheduleSpec& spec) {
  const auto probs = evaluator.probabilities(restored);
  return select_start_step(restored, probs, alpha, spec);
}

DiffusionState adaptive_init(const TokenGrid& restored, const MaskGrid& trusted, Token mask_id) {
  require(restored.width == trusted.width && restored.height == trusted.height, "adaptive_init shape mismatch");
  return {apply_mask(restored, trusted, mask_id), trusted, 0};
}

Refined refine_step(const DiffusionState& state, const TokenGrid& restored, const TokenRefiner& refiner,
                    double temperature, Selection selection, Rng& rng) {
  require(temperature > 0.0, "temperature must be > 0");
  Refined out{TokenGrid(restored.width, restored.height), refiner.logits(state, restored)};
  const auto& logits = out.logits;
  require(logits.width == restored.width && logits.height == restored.height, "refiner output shape mismatch");
  require(std::all_of(logits.values.begin(), logits.values.end(), [](double v) { return std::isfinite(v); }),
          "refiner produced non-finite logits");

  std::vector<double> weights(static_cast<std::size_t>(logits.classes));
  for (int i = 0; i < logits.cells(); ++i) {
    const auto row = logits.cell(i);
    const auto best = std::ranges::max_element(row);
    if (selection == Selection::deterministic) {
      out.tokens[i] = static_cast<Token>(std::distance(row.begin(), best));
      continue;
    }
    double total = 0.0;
    for (int c = 0; c < logits.classes; ++c) {
      weights[c] = std::exp((row[c] - *best) / temperature);
      total += weights[c];
    }
    const double u = rng.uniform() * total;
    double acc = 0.0;
    Token chosen = static_cast<Token>(std::distance(row.begin(), best));
    for (int c = 0; c < logits.classes; ++c) {
      acc += weights[c];
      if (u < acc) {
        chosen = c;
        break;
      }
    }
    out.tokens[i] = chosen;
  }
  return out;
}

MaskGrid select_cells(std::span<const double> scores, int width, int height, int k, Selection selection, Rng& rng) {
  const int cells = width * height;
  require(scores.size() == static_cast<std::size_t>(cells), "selection score shape mismatch");
  require(k >= 1 && k <= cells, "selection count " + std::to_string(k) + " outside [1, " + std::to_string(cells) + "]");

  std::vector<double> keys(static_cast<std::size_t>(cells));
  for (int i = 0; i < cells; ++i) {
    const double s = scores[static_cast<std::size_t>(i)];
    require(std::isfinite(s) && s >= 0.0, "selection scores must be finite and non-negative");
    if (selection == Selection::deterministic) {
      keys[i] = s;
    } else {
      const double g = rng.gumbel();
      keys[i] = s > 0.0 ? std::log(s) + g : -std::numeric_limits<double>::infinity();
    }
  }
  std::vector<int> order(static_cast<std::size_t>(cells));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return keys[a] > keys[b]; });

  MaskGrid out(width, height);
  for (int i = 0; i < k; ++i) out[order[static_cast<std::size_t>(i)]] = 1;
  return out;
}

MaskGrid evaluator_select(const TokenGrid& refined, const TokenEvaluator& evaluator, int k, Selection selection,
                          Rng& rng) {
  const auto probs = evaluator.probabilities(refined);
  return select_cells(probs, refined.width, refined.height, k, selection, rng);
}

MaskGrid topk_select(const TokenGrid& refined, const LogitGrid& refiner_logits, const MaskGrid& committed, int k) {
  const int cells = refined.cells();
  require(committed.cells() == cells && refiner_logits.cells() == cells, "topk_select shape mismatch");
  const int kept = committed.count();
  require(k >= kept, "topk_select: k = " + std::to_string(k) + " is smaller than the committed count " +
                         std::to_string(kept));
  require(k <= cells, "topk_select: k exceeds the cell count");

  std::vector<double> confidence(static_cast<std::size_t>(cells));
  for (int i = 0; i < cells; ++i) {
    const auto row = refiner_logits.cell(i);
    const double peak = *std::ranges::max_element(row);
    double z = 0.0;
    for (double v : row) z += std::exp(v - peak);
    confidence[i] = std::exp(row[static_cast<std::size_t>(refined[i])] - peak) / z;
  }
  std::vector<int> open;
  for (int i = 0; i < cells; ++i) {
    if (!committed[i]) open.push_back(i);
  }
  std::stable_sort(open.begin(), open.end(), [&](int a, int b) { return confidence[a] > confidence[b]; });

  MaskGrid out = committed;
  for (int i = 0; i < k - kept; ++i) out[open[static_cast<std::size_t>(i)]] = 1;
  return out;
}

SampleResult sample(const TokenGrid& restored, const TokenRefiner& refiner, const TokenEvaluator& evaluator,
                    const SampleConfig& config, Token mask_id) {
  validate(config);
  require(!restored.contains(mask_id), "restored tokens must not contain the mask token");
  const int cells = restored.cells();
  Rng rng(config.seed);

  Trajectory trajectory;
  trajectory.strategy = config.strategy;
  trajectory.selection = config.selection;

  DiffusionState state{TokenGrid(restored.width, restored.height, mask_id), MaskGrid(restored.width, restored.height),
                       config.schedule.steps};
  int start = config.schedule.steps;
  if (config.adaptive) {
    const auto s = select_start_step(restored, evaluator, config.alpha, config.schedule);
    start = s.step;
    state = adaptive_init(restored, s.trusted, mask_id);
    trajectory.trusted_count = s.trusted.count();
  }
  state.step = start;
  trajectory.start_step = start;

  for (int t = start; t >= 1; --t) {
    const int k = unmask_count(config.schedule, t, cells);
    auto refined = refine_step(state, restored, refiner, config.temperature, config.selection, rng);
    MaskGrid selected;
    if (config.strategy == Strategy::topk) {
      for (int i = 0; i < cells; ++i) {
        if (state.mask[i]) refined.tokens[i] = state.tokens[i];
      }
      selected = topk_select(refined.tokens, refined.logits, state.mask, k);
    } else {
      selected = evaluator_select(refined.tokens, evaluator, k, config.selection, rng);
    }

    MaskGrid fresh(restored.width, restored.height);
    for (int i = 0; i < cells; ++i) fresh[i] = selected[i] && !state.mask[i];

    DiffusionState next{apply_mask(refined.tokens, selected, mask_id), selected, t - 1};
    trajectory.steps.push_back({t, next, selected, fresh});
    state = std::move(next);
  }
  return {state.tokens, std::move(trajectory)};
}

double pairwise_dispersion(const MaskGrid& cells) {
  std::vector<std::pair<int, int>> points;
  for (int i = 0; i < cells.cells(); ++i) {
    if (cells[i]) points.emplace_back(i % cells.width, i / cells.width);
  }
  if (points.size() < 2) return 0.0;
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < points.size(); ++a) {
    for (std::size_t b = a + 1; b < points.size(); ++b) {
      const double dx = points[a].first - points[b].first;
      const double dy = points[a].second - points[b].second;
      total += std::sqrt(dx * dx + dy * dy);
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

double mask_dispersion(const Trajectory& trajectory) {
  double total = 0.0;
  int steps = 0;
  for (const auto& step : trajectory.steps) {
    if (step.newly_selected.count() < 2) continue;
    total += pairwise_dispersion(step.newly_selected);
    ++steps;
  }
  return steps == 0 ? 0.0 : total / steps;
}

void write_token_csv(const TokenGrid& tokens, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), "cannot write " + path.string());
  for (int x = 0; x < tokens.width; ++x) out << (x ? "," : "") << "c" << x;
  out << "\n";
  for (int y = 0; y < tokens.height; ++y) {
    for (int x = 0; x < tokens.width; ++x) out << (x ? "," : "") << tokens.at(x, y);
    out << "\n";
  }
  require(static_cast<bool>(out), "failed writing " + path.string());
}

TokenGrid read_token_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open " + path.string());
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "empty token file " + path.string());
  std::vector<Token> values;
  int width = -1;
  int height = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    int count = 0;
    while (std::getline(row, cell, ',')) {
      values.push_back(static_cast<Token>(std::stoi(cell)));
      ++count;
    }
    require(width < 0 || width == count, "ragged token grid in " + path.string());
    width = count;
    ++height;
  }
  require(width > 0 && height > 0, "empty token grid in " + path.string());
  return TokenGrid(width, height, std::move(values));
}

void dump_trajectory(const Trajectory& trajectory, const SampleConfig& config, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < trajectory.steps.size(); ++i) {
    const auto& step = trajectory.steps[i];
    char stem[32];
    std::snprintf(stem, sizeof stem, "step_%02d", step.t);
    Image mask(step.selected.width, step.selected.height, 1);
    for (int c = 0; c < step.selected.cells(); ++c) mask.samples[static_cast<std::size_t>(c)] = step.selected[c];
    write_pnm(mask, dir / (std::string(stem) + "_mask.pgm"));
    write_token_csv(step.state.tokens, dir / (std::string(stem) + "_tokens.csv"));
  }
  nlohmann::ordered_json meta;
  meta["start_step"] = trajectory.start_step;
  meta["trusted_count"] = trajectory.trusted_count;
  meta["strategy"] = to_string(trajectory.strategy);
  meta["selection"] = to_string(trajectory.selection);
  meta["schedule.kind"] = to_string(config.schedule.kind);
  meta["schedule.T"] = config.schedule.steps;
  meta["alpha"] = config.alpha;
  meta["temperature"] = config.temperature;
  meta["adaptive"] = config.adaptive;
  meta["seed"] = config.seed;
  meta["steps"] = trajectory.steps.size();
  std::ofstream out(dir / "meta.json");
  require(static_cast<bool>(out), "cannot write trajectory metadata in " + dir.string());
  out << meta.dump(2) << "\n";
}

}  // namespace itersr
