#include <doctest.h>

#include <cmath>

#include "itersr/error.hpp"
#include "itersr/losses.hpp"
#include "support.hpp"

using namespace itersr;

namespace {

LogitGrid random_logits(int w, int h, int n, std::uint64_t seed) {
  Rng rng(seed);
  LogitGrid g{w, h, n, std::vector<double>(static_cast<std::size_t>(w * h * n))};
  for (auto& v : g.values) v = rng.uniform(-2.0, 2.0);
  return g;
}

TokenGrid random_grid(int w, int h, int n, std::uint64_t seed) {
  Rng rng(seed);
  TokenGrid g(w, h);
  for (auto& t : g.tokens) t = static_cast<Token>(rng.below(static_cast<std::uint64_t>(n)));
  return g;
}

std::vector<double> random_probs(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> p(n);
  for (auto& v : p) v = rng.uniform(0.05, 0.95);
  return p;
}

std::vector<std::uint8_t> random_labels(std::size_t n, double p1, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::uint8_t> l(n);
  for (auto& v : l) v = rng.uniform() < p1 ? 1 : 0;
  return l;
}

}  // namespace

TEST_SUITE("losses") {
  TEST_CASE("cross-entropy closed forms") {
    LogitGrid uniform{2, 2, 4, std::vector<double>(16, 0.3)};
    CHECK(ce_tokens(uniform, TokenGrid(2, 2, {0, 1, 2, 3})).loss == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    LogitGrid sharp{1, 1, 3, {0.0, 800.0, 0.0}};
    CHECK(ce_tokens(sharp, TokenGrid(1, 1, {1})).loss < 1e-300);
    CHECK_THROWS_AS(ce_tokens(sharp, TokenGrid(1, 1, {3})), Error);
    CHECK_THROWS_AS(ce_tokens(sharp, TokenGrid(2, 1, {0, 1})), Error);
  }

  TEST_CASE("cross-entropy gradient matches finite differences") {
    auto logits = random_logits(3, 2, 5, 1);
    const auto targets = random_grid(3, 2, 5, 2);
    const auto g = ce_tokens(logits, targets);
    for (std::size_t i = 0; i < logits.values.size(); ++i) {
      const double fd = test::central_diff(logits.values, i, [&] { return ce_tokens(logits, targets).loss; }, 1e-5);
      CHECK(test::rel_err(g.grad[i], fd) < 1e-6);
    }
  }

  TEST_CASE("token accuracy uses the argmax") {
    LogitGrid l{2, 1, 2, {0.1, 0.9, 0.8, 0.2}};
    CHECK(token_accuracy(l, TokenGrid(2, 1, {1, 1})) == 0.5);
  }

  TEST_CASE("binary cross-entropy values and clamping") {
    const std::vector<double> half(6, 0.5);
    const std::vector<std::uint8_t> labels{0, 1, 0, 1, 1, 0};
    CHECK(bce_mask(half, labels).loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    const std::vector<double> exact{0, 1, 0, 1, 1, 0};
    const auto l = bce_mask(exact, labels);
    CHECK(l.loss <= 1e-10);
    for (double g : l.grad) CHECK(std::isfinite(g));
    const std::vector<double> wrong{1, 0};
    CHECK(std::isfinite(bce_mask(wrong, std::vector<std::uint8_t>{0, 1}).loss));
  }

  TEST_CASE("binary cross-entropy gradient") {
    auto p = random_probs(12, 3);
    const auto labels = random_labels(12, 0.4, 4);
    const auto g = bce_mask(p, labels);
    for (std::size_t i = 0; i < p.size(); ++i) {
      CHECK(test::rel_err(g.grad[i], test::central_diff(p, i, [&] { return bce_mask(p, labels).loss; })) < 1e-6);
    }
  }

  TEST_CASE("class-balanced weight") {
    CHECK(balanced_weight(1, 0.9999) == 1.0);
    CHECK(balanced_weight(10000, 0.9999) == doctest::Approx(1.58197e-4).epsilon(1e-5));
    CHECK_THROWS_AS(balanced_weight(0, 0.9999), Error);
    double prev = 2.0;
    for (std::int64_t n = 1; n < 5000; n += 7) {
      const double w = balanced_weight(n);
      CHECK(w < prev);
      prev = w;
    }
  }

  TEST_CASE("balanced BCE equals weighted BCE for balanced classes") {
    const auto p = random_probs(10, 5);
    const std::vector<std::uint8_t> labels{1, 0, 1, 0, 1, 0, 1, 0, 1, 0};
    const double w = balanced_weight(5);
    CHECK(balanced_bce_mask(p, labels).loss == doctest::Approx(w * bce_mask(p, labels).loss).epsilon(1e-12));
  }

  TEST_CASE("balanced BCE with a single class keeps only that term") {
    const auto p = random_probs(8, 6);
    const std::vector<std::uint8_t> ones(8, 1);
    double expected = 0.0;
    for (double v : p) expected -= std::log(v);
    expected *= balanced_weight(8) / 8.0;
    CHECK(balanced_bce_mask(p, ones).loss == doctest::Approx(expected).epsilon(1e-12));
  }

  TEST_CASE("balanced BCE gradient") {
    auto p = random_probs(15, 7);
    const auto labels = random_labels(15, 0.3, 8);
    const auto g = balanced_bce_mask(p, labels, 0.9);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double fd = test::central_diff(p, i, [&] { return balanced_bce_mask(p, labels, 0.9).loss; });
      CHECK(test::rel_err(g.grad[i], fd) < 1e-6);
    }
  }

  TEST_CASE("losses are convex along random segments") {
    Rng rng(9);
    const auto targets = random_grid(2, 2, 4, 10);
    const auto labels = random_labels(4, 0.5, 11);
    for (int trial = 0; trial < 50; ++trial) {
      auto a = random_logits(2, 2, 4, 100 + trial);
      auto b = random_logits(2, 2, 4, 200 + trial);
      auto mid = a;
      for (std::size_t i = 0; i < mid.values.size(); ++i) mid.values[i] = 0.5 * (a.values[i] + b.values[i]);
      CHECK(ce_tokens(mid, targets).loss <= 0.5 * (ce_tokens(a, targets).loss + ce_tokens(b, targets).loss) + 1e-12);

      const auto pa = random_probs(4, 300 + trial);
      const auto pb = random_probs(4, 400 + trial);
      std::vector<double> pm(4);
      for (int i = 0; i < 4; ++i) pm[i] = 0.5 * (pa[i] + pb[i]);
      CHECK(bce_mask(pm, labels).loss <= 0.5 * (bce_mask(pa, labels).loss + bce_mask(pb, labels).loss) + 1e-12);
    }
  }

  TEST_CASE("ground-truth mask is token equality") {
    const auto truth = random_grid(4, 4, 5, 12);
    CHECK(make_ground_truth_mask(truth, truth, 5).count() == 16);
    auto shifted = truth;
    for (auto& t : shifted.tokens) t = (t + 1) % 5;
    CHECK(make_ground_truth_mask(shifted, truth, 5).count() == 0);
    const auto other = random_grid(4, 4, 5, 13);
    const auto m = make_ground_truth_mask(other, truth, 5);
    for (int c = 0; c < 16; ++c) CHECK(m[c] == (other[c] == truth[c] ? 1 : 0));
    CHECK_THROWS_AS(make_ground_truth_mask(other, TokenGrid(3, 3), 5), Error);
  }
}
