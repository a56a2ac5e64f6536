#include "itersr/losses.hpp"

#include <algorithm>
#include <cmath>

#include "itersr/error.hpp"

namespace itersr {

LossGrad ce_tokens(const LogitGrid& logits, const TokenGrid& targets) {
  require(logits.width == targets.width && logits.height == targets.height, "ce_tokens shape mismatch");
  const int cells = logits.cells();
  const int classes = logits.classes;
  LossGrad out{0.0, std::vector<double>(logits.values.size())};
  for (int i = 0; i < cells; ++i) {
    const Token target = targets[i];
    if (target < 0 || target >= classes) {
      throw Error("ce_tokens target " + std::to_string(target) + " is the mask token or out of range");
    }
    const auto row = logits.cell(i);
    const double peak = *std::ranges::max_element(row);
    double z = 0.0;
    for (double v : row) z += std::exp(v - peak);
    const double log_z = std::log(z) + peak;
    out.loss += log_z - row[target];
    double* g = out.grad.data() + static_cast<std::size_t>(i) * classes;
    for (int c = 0; c < classes; ++c) g[c] = std::exp(row[c] - log_z) / cells;
    g[target] -= 1.0 / cells;
  }
  out.loss /= cells;
  return out;
}

double token_accuracy(const LogitGrid& logits, const TokenGrid& targets) {
  const auto predicted = argmax_tokens(logits);
  int hits = 0;
  for (int i = 0; i < predicted.cells(); ++i) hits += predicted[i] == targets[i];
  return static_cast<double>(hits) / predicted.cells();
}

namespace {
double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }
}  // namespace

LossGrad bce_mask(std::span<const double> probs, std::span<const std::uint8_t> labels) {
  require(probs.size() == labels.size() && !probs.empty(), "bce_mask shape mismatch");
  const double n = static_cast<double>(probs.size());
  LossGrad out{0.0, std::vector<double>(probs.size())};
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = clamp_prob(probs[i]);
    if (labels[i]) {
      out.loss -= std::log(p);
      out.grad[i] = -1.0 / (p * n);
    } else {
      out.loss -= std::log1p(-p);
      out.grad[i] = 1.0 / ((1.0 - p) * n);
    }
  }
  out.loss /= n;
  return out;
}

double balanced_weight(std::int64_t n, double beta) {
  require(n >= 1, "balanced_weight needs a class count >= 1");
  require(beta >= 0.0 && beta < 1.0, "balanced_weight needs beta in [0, 1)");
  if (n == 1 || beta == 0.0) return 1.0;
  // 1 - beta^n = -expm1(n * log1p(beta - 1)), accurate when beta is close to 1.
  const double denom = -std::expm1(static_cast<double>(n) * std::log1p(beta - 1.0));
  return (1.0 - beta) / denom;
}

LossGrad balanced_bce_mask(std::span<const double> probs, std::span<const std::uint8_t> labels, double beta) {
  require(probs.size() == labels.size() && !probs.empty(), "balanced_bce_mask shape mismatch");
  const auto ones = std::count(labels.begin(), labels.end(), std::uint8_t{1});
  const auto zeros = static_cast<std::int64_t>(labels.size()) - ones;
  const double w_one = ones > 0 ? balanced_weight(ones, beta) : 0.0;
  const double w_zero = zeros > 0 ? balanced_weight(zeros, beta) : 0.0;

  auto out = bce_mask(probs, labels);
  out.loss = 0.0;
  const double n = static_cast<double>(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = clamp_prob(probs[i]);
    const double w = labels[i] ? w_one : w_zero;
    out.loss -= w * (labels[i] ? std::log(p) : std::log1p(-p));
    out.grad[i] *= w;
  }
  out.loss /= n;
  return out;
}

MaskGrid make_ground_truth_mask(const TokenGrid& predicted, const TokenGrid& truth, Token mask_id) {
  require(predicted.width == truth.width && predicted.height == truth.height, "ground-truth mask shape mismatch");
  require(!truth.contains(mask_id), "ground-truth tokens contain the mask token");
  MaskGrid out(truth.width, truth.height);
  for (int i = 0; i < truth.cells(); ++i) out[i] = predicted[i] == truth[i] ? 1 : 0;
  return out;
}

}  // namespace itersr
