#include "itersr/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "itersr/diffusion.hpp"
#include "itersr/error.hpp"
#include "itersr/parallel.hpp"
#include "itersr/rng.hpp"

namespace itersr {

EvaluatorInput parse_evaluator_input(std::string_view text) {
  if (text == "sampled") return EvaluatorInput::sampled;
  if (text == "sentinel") return EvaluatorInput::sentinel;
  throw Error("unknown evaluator input '" + std::string(text) + "' (expected sampled or sentinel)");
}

std::string to_string(EvaluatorInput mode) { return mode == EvaluatorInput::sampled ? "sampled" : "sentinel"; }

void validate(const TrainConfig& config) {
  require(config.batch >= 1, "train.batch must be >= 1");
  require(config.iterations >= 1, "train.iterations must be >= 1");
  require(config.checkpoint_every >= 1, "train.checkpoint_every must be >= 1");
  require(config.schedule.steps >= 1, "schedule.T must be >= 1");
  require(config.adam.lr > 0.0, "train.lr must be > 0");
  require(config.class_balance_beta >= 0.0 && config.class_balance_beta < 1.0,
          "train.class_balance_beta must lie in [0, 1)");
}

std::uint64_t train_step_seed(std::uint64_t seed, std::int64_t step) {
  return derive_seed(seed, "train-step", static_cast<std::uint64_t>(step));
}

std::vector<TrainItem> training_batch(const ToyWorld& world, const ModelSpec& spec, std::uint64_t seed,
                                      std::int64_t step, int batch) {
  std::vector<TrainItem> items;
  items.reserve(static_cast<std::size_t>(batch));
  for (int b = 0; b < batch; ++b) {
    auto ex = world.make_example(derive_seed(seed, "train-data", static_cast<std::uint64_t>(step),
                                             static_cast<std::uint64_t>(b)));
    items.push_back({world.restoration_input(ex.lq_image, spec), std::move(ex.hq_tokens)});
  }
  return items;
}

namespace {

// Per-item forward state kept between the two passes of train_step.
struct ItemWork {
  CellNet::Cache restore_cache;
  CellNet::Cache refine_cache;
  CellNet::Cache eval_t_cache;
  CellNet::Cache eval_l_cache;
  CellFeatures refine_input;
  CellFeatures eval_t_input;
  CellFeatures eval_l_input;
  std::vector<double> eval_l_probs;
  std::vector<std::uint8_t> eval_l_labels;

  double restore_loss = 0.0;
  double restore_acc = 0.0;
  double refine_loss = 0.0;
  int masked_cells = 0;
  int masked_hits = 0;
  double eval_t_loss = 0.0;
};

void check_finite(double value, const std::string& what, std::int64_t step) {
  require(std::isfinite(value), "non-finite " + what + " loss at step " + std::to_string(step));
}

// d(loss)/d(logit) for a logistic output given d(loss)/d(probability).
std::vector<double> through_logistic(const std::vector<double>& d_prob, const std::vector<double>& probs, double scale) {
  std::vector<double> out(d_prob.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = scale * d_prob[i] * probs[i] * (1.0 - probs[i]);
  return out;
}

}  // namespace

LossReport train_step(Model& model, std::span<const TrainItem> batch, const TrainConfig& config,
                      std::uint64_t step_seed) {
  require(!batch.empty(), "training batch is empty");
  const int n_items = static_cast<int>(batch.size());
  const int num_codes = model.spec().num_codes;
  const Token mask_id = model.mask_id();
  const double inv_batch = 1.0 / n_items;

  std::vector<ItemWork> work(batch.size());
  std::vector<Gradients> g_restore(batch.size(), Gradients(model.restore));
  std::vector<Gradients> g_refine(batch.size(), Gradients(model.refine));
  std::vector<Gradients> g_eval(batch.size(), Gradients(model.evaluate));

  // Pass 1: everything that is local to an item.
  parallel_for(batch.size(), config.threads, [&](std::size_t b) {
    const auto& item = batch[b];
    auto& w = work[b];
    require(!item.hq_tokens.contains(mask_id), "training targets contain the mask token");
    Rng rng(derive_seed(step_seed, "item", b));

    // E_l: distortion removal.
    const auto logits_l = model.restore_net().forward(model.restore, item.restoration_input, &w.restore_cache);
    auto ce_l = ce_tokens(logits_l, item.hq_tokens);
    w.restore_loss = ce_l.loss;
    w.restore_acc = token_accuracy(logits_l, item.hq_tokens);
    for (auto& g : ce_l.grad) g *= inv_batch;
    model.restore_net().backward(model.restore, item.restoration_input, w.restore_cache, ce_l.grad, g_restore[b]);
    const TokenGrid restored = argmax_tokens(logits_l);

    // phi_r on a forward-diffused S_t.
    const double r = rng.uniform_open_closed();
    const auto state = forward_mask(item.hq_tokens, mask_id, r, config.schedule, derive_seed(step_seed, "mask", b));
    w.refine_input = refiner_features(state, restored, num_codes);
    const auto logits_r = model.refine_net().forward(model.refine, w.refine_input, &w.refine_cache);
    auto ce_r = ce_tokens(logits_r, item.hq_tokens);
    w.refine_loss = ce_r.loss;
    const auto predicted = argmax_tokens(logits_r);
    for (int i = 0; i < state.mask.cells(); ++i) {
      if (state.mask[i]) continue;
      ++w.masked_cells;
      w.masked_hits += predicted[i] == item.hq_tokens[i];
    }
    for (auto& g : ce_r.grad) g *= inv_batch;
    model.refine_net().backward(model.refine, w.refine_input, w.refine_cache, ce_r.grad, g_refine[b]);

    // phi_e on S_t against m_t.
    TokenGrid shown = state.tokens;
    if (config.evaluator_input == EvaluatorInput::sampled) {
      for (int i = 0; i < shown.cells(); ++i) {
        if (state.mask[i]) continue;
        const auto row = logits_r.cell(i);
        const double peak = *std::ranges::max_element(row);
        double total = 0.0;
        for (double v : row) total += std::exp(v - peak);
        const double u = rng.uniform() * total;
        double acc = 0.0;
        Token chosen = num_codes - 1;
        for (int c = 0; c < num_codes; ++c) {
          acc += std::exp(row[c] - peak);
          if (u < acc) {
            chosen = c;
            break;
          }
        }
        shown[i] = chosen;
      }
    }
    w.eval_t_input = evaluator_features(shown, num_codes);
    const auto logits_t = model.evaluate_net().forward(model.evaluate, w.eval_t_input, &w.eval_t_cache);
    std::vector<double> probs_t(logits_t.values.size());
    std::ranges::transform(logits_t.values, probs_t.begin(), logistic);
    const auto bce_t = bce_mask(probs_t, state.mask.bits);
    w.eval_t_loss = bce_t.loss;
    model.evaluate_net().backward(model.evaluate, w.eval_t_input, w.eval_t_cache,
                                  through_logistic(bce_t.grad, probs_t, inv_batch), g_eval[b]);

    // phi_e on S_l: labels are exact matches with S_h; its loss needs batch counts.
    w.eval_l_input = evaluator_features(restored, num_codes);
    const auto logits_sl = model.evaluate_net().forward(model.evaluate, w.eval_l_input, &w.eval_l_cache);
    w.eval_l_probs.resize(logits_sl.values.size());
    std::ranges::transform(logits_sl.values, w.eval_l_probs.begin(), logistic);
    w.eval_l_labels = make_ground_truth_mask(restored, item.hq_tokens, mask_id).bits;
  });

  // Pass 2: class-balanced S_l term over the whole batch.
  std::vector<double> probs_l;
  std::vector<std::uint8_t> labels_l;
  std::vector<std::size_t> offsets;
  for (const auto& w : work) {
    offsets.push_back(probs_l.size());
    probs_l.insert(probs_l.end(), w.eval_l_probs.begin(), w.eval_l_probs.end());
    labels_l.insert(labels_l.end(), w.eval_l_labels.begin(), w.eval_l_labels.end());
  }
  const auto balanced = balanced_bce_mask(probs_l, labels_l, config.class_balance_beta);
  parallel_for(batch.size(), config.threads, [&](std::size_t b) {
    auto& w = work[b];
    const std::size_t offset = offsets[b];
    std::vector<double> d_prob(balanced.grad.begin() + static_cast<std::ptrdiff_t>(offset),
                               balanced.grad.begin() + static_cast<std::ptrdiff_t>(offset + w.eval_l_probs.size()));
    // balanced.grad is already normalized by the batch cell count.
    model.evaluate_net().backward(model.evaluate, w.eval_l_input, w.eval_l_cache,
                                  through_logistic(d_prob, w.eval_l_probs, 1.0), g_eval[b]);
  });

  LossReport report;
  int masked = 0;
  int hits = 0;
  for (const auto& w : work) {
    report.restoration += w.restore_loss * inv_batch;
    report.restoration_accuracy += w.restore_acc * inv_batch;
    report.refiner += w.refine_loss * inv_batch;
    report.evaluator += w.eval_t_loss * inv_batch;
    masked += w.masked_cells;
    hits += w.masked_hits;
  }
  report.evaluator += balanced.loss;
  report.refiner_masked_accuracy = masked == 0 ? 0.0 : static_cast<double>(hits) / masked;
  check_finite(report.restoration, "restoration", report.step);
  check_finite(report.refiner, "refiner", report.step);
  check_finite(report.evaluator, "evaluator", report.step);

  // Fixed-order reduction, then one optimizer step per network.
  auto update = [&](bool enabled, ModelParams& params, const std::vector<Gradients>& grads) {
    if (!enabled) return;
    params.zero_grad();
    for (const auto& g : grads) g.add_to(params);
    adam_step(params, config.adam);
  };
  update(config.update_restore, model.restore, g_restore);
  update(config.update_refine, model.refine, g_refine);
  update(config.update_evaluate, model.evaluate, g_eval);
  return report;
}

std::string log_header() { return "step,L_dist,L_r,L_e,token_acc,refine_masked_acc"; }

std::string log_row(const LossReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g,%.17g,%.17g", static_cast<long long>(r.step), r.restoration,
                r.refiner, r.evaluator, r.restoration_accuracy, r.refiner_masked_accuracy);
  return buf;
}

std::vector<std::pair<std::string, std::vector<double>>> training_extras(const ToyWorld& world, std::int64_t next_step) {
  const auto& c = world.config();
  const auto& book = world.codebook();
  return {
      {"train.next_step", {static_cast<double>(next_step)}},
      {"codebook.shape", {static_cast<double>(book.size()), static_cast<double>(book.dim()), static_cast<double>(c.tile)}},
      {"codebook", std::vector<double>(book.entries().begin(), book.entries().end())},
  };
}

namespace {

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::int64_t step) {
  char name[64];
  std::snprintf(name, sizeof name, "ckpt_%08lld.bin", static_cast<long long>(step));
  return dir / name;
}

void truncate_log(const std::filesystem::path& log_path, std::int64_t keep_through) {
  std::vector<std::string> kept;
  if (std::filesystem::exists(log_path)) {
    std::ifstream in(log_path);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (std::stoll(line.substr(0, line.find(','))) <= keep_through) kept.push_back(line);
    }
  }
  std::ofstream out(log_path, std::ios::trunc);
  require(static_cast<bool>(out), "cannot write " + log_path.string());
  out << log_header() << "\n";
  for (const auto& l : kept) out << l << "\n";
}

}  // namespace

TrainResult train(const TrainConfig& config, const ToyWorld& world, Model model, const std::filesystem::path& out_dir,
                  const std::optional<std::filesystem::path>& resume, const ProgressFn& progress) {
  validate(config);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  require(!ec && std::filesystem::is_directory(out_dir), "cannot create output directory " + out_dir.string());

  std::int64_t done = 0;
  if (resume) {
    auto loaded = load_checkpoint(*resume);
    require(loaded.model.spec() == model.spec(), "resume checkpoint does not match the configured model");
    const auto* next = loaded.extra("train.next_step");
    require(next && next->size() == 1, "resume checkpoint has no train.next_step");
    done = static_cast<std::int64_t>((*next)[0]);
    model = std::move(loaded.model);
  }

  const auto log_path = out_dir / "log.csv";
  truncate_log(log_path, done);
  std::ofstream log(log_path, std::ios::app);
  require(static_cast<bool>(log), "cannot write " + log_path.string());

  TrainResult result;
  for (std::int64_t step = done + 1; step <= config.iterations; ++step) {
    const auto batch = training_batch(world, model.spec(), config.seed, step, config.batch);
    LossReport report;
    try {
      report = train_step(model, batch, config, train_step_seed(config.seed, step));
    } catch (const Error& e) {
      throw Error(std::string(e.what()) + " (iteration " + std::to_string(step) + ")");
    }
    report.step = step;
    log << log_row(report) << "\n" << std::flush;
    result.log.push_back(report);
    if (progress) progress(report);
    if (step % config.checkpoint_every == 0) {
      save_checkpoint(model, checkpoint_path(out_dir, step), training_extras(world, step));
    }
  }
  result.completed_steps = config.iterations;
  result.final_checkpoint = out_dir / "final.bin";
  save_checkpoint(model, result.final_checkpoint, training_extras(world, std::max(done, config.iterations)));
  return result;
}

}  // namespace itersr
