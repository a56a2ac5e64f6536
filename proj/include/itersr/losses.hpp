#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "itersr/diffusion.hpp"
#include "itersr/nets.hpp"
#include "itersr/token_core.hpp"

namespace itersr {

/// Scalar loss with its gradient w.r.t. the scored quantity (logits or probabilities).
struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Mean softmax cross-entropy over all cells. The gradient w.r.t. the logits is
/// (softmax - onehot) / cells. Throws if a target is the mask sentinel (or any
/// index >= classes).
LossGrad ce_tokens(const LogitGrid& logits, const TokenGrid& targets);

/// Fraction of cells whose argmax equals the target.
double token_accuracy(const LogitGrid& logits, const TokenGrid& targets);

inline constexpr double kProbClamp = 1e-12;

/// Mean binary cross-entropy of probabilities against 0/1 labels, with p
/// clamped to [1e-12, 1 - 1e-12]. Gradient is w.r.t. the probabilities.
LossGrad bce_mask(std::span<const double> probs, std::span<const std::uint8_t> labels);

/// (1 - beta) / (1 - beta^n). Exactly 1 for n = 1. Throws for n = 0.
double balanced_weight(std::int64_t n, double beta = 0.9999);

/// Like bce_mask, but each term is scaled by balanced_weight(n_y) where n_y
/// counts the labels of its class in the batch. A class that does not occur
/// contributes nothing.
LossGrad balanced_bce_mask(std::span<const double> probs, std::span<const std::uint8_t> labels, double beta = 0.9999);

/// 1 where the prediction equals the ground-truth token.
MaskGrid make_ground_truth_mask(const TokenGrid& predicted, const TokenGrid& truth, Token mask_id);

/// Per-iteration training losses; serialized as one CSV row by the trainer.
struct LossReport {
  std::int64_t step = 0;
  double restoration = 0.0;  // L_dist
  double refiner = 0.0;      // L_r
  double evaluator = 0.0;    // L_e
  double restoration_accuracy = 0.0;
  double refiner_masked_accuracy = 0.0;

  double total() const { return restoration + refiner + evaluator; }
  bool operator==(const LossReport&) const = default;
};

}  // namespace itersr
