#include "itersr/toy_world.hpp"

#include <cmath>

#include "itersr/error.hpp"
#include "itersr/rng.hpp"

namespace itersr {

ToyWorld::ToyWorld(WorldConfig config, std::uint64_t seed)
    : config_(config), book_(tile_codebook(config.codes, config.tile, seed, 1, config.texture)) {
  require(config_.width >= 1 && config_.height >= 1, "world grid must be at least 1x1");
  require(config_.sweeps >= 0 && config_.coupling >= 0.0, "invalid Potts parameters");
}

TokenGrid ToyWorld::sample_tokens(std::uint64_t seed) const {
  const int w = config_.width;
  const int h = config_.height;
  const int n = config_.codes;
  Rng rng(seed);
  TokenGrid grid(w, h);
  for (auto& t : grid.tokens) t = static_cast<Token>(rng.below(static_cast<std::uint64_t>(n)));

  std::vector<int> counts(static_cast<std::size_t>(n));
  std::vector<double> weights(static_cast<std::size_t>(n));
  for (int sweep = 0; sweep < config_.sweeps; ++sweep) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        std::fill(counts.begin(), counts.end(), 0);
        if (x > 0) ++counts[grid.at(x - 1, y)];
        if (x + 1 < w) ++counts[grid.at(x + 1, y)];
        if (y > 0) ++counts[grid.at(x, y - 1)];
        if (y + 1 < h) ++counts[grid.at(x, y + 1)];
        double total = 0.0;
        for (int k = 0; k < n; ++k) {
          weights[k] = std::exp(config_.coupling * counts[k]);
          total += weights[k];
        }
        const double u = rng.uniform() * total;
        double acc = 0.0;
        Token chosen = n - 1;
        for (int k = 0; k < n; ++k) {
          acc += weights[k];
          if (u < acc) {
            chosen = k;
            break;
          }
        }
        grid[y * w + x] = chosen;
      }
    }
  }
  return grid;
}

Example ToyWorld::make_example(std::uint64_t seed) const {
  return make_example(sample_tokens(derive_seed(seed, "world-tokens")), seed);
}

Example ToyWorld::make_example(TokenGrid hq_tokens, std::uint64_t seed) const {
  Example ex;
  ex.hq_image = decode_tokens(hq_tokens, book_, config_.tile);
  ex.lq_image = degrade(ex.hq_image, config_.degrade, derive_seed(seed, "world-degrade"));
  ex.lq_tokens = encode_pixels(ex.lq_image, book_, config_.tile);
  ex.hq_tokens = std::move(hq_tokens);
  return ex;
}

CellFeatures ToyWorld::restoration_input(const Image& lq_image, const ModelSpec& spec) const {
  return itersr::restoration_input(lq_image, book_, config_.tile, spec);
}

CellFeatures restoration_input(const Image& lq_image, const Codebook& book, int tile, const ModelSpec& spec) {
  if (spec.restore_input == RestoreInput::tokens) {
    return restoration_features_from_tokens(encode_pixels(lq_image, book, tile), spec.num_codes);
  }
  auto tiles = image_tiles(lq_image, tile);
  require(tiles.dim == spec.pixel_dim, "model pixel_dim does not match the world tile size");
  return restoration_features_from_pixels(tiles.width, tiles.height, tiles.dim, std::move(tiles.values));
}

double neighbor_agreement(const TokenGrid& tokens) {
  int same = 0;
  int pairs = 0;
  for (int y = 0; y < tokens.height; ++y) {
    for (int x = 0; x < tokens.width; ++x) {
      if (x + 1 < tokens.width) {
        same += tokens.at(x, y) == tokens.at(x + 1, y);
        ++pairs;
      }
      if (y + 1 < tokens.height) {
        same += tokens.at(x, y) == tokens.at(x, y + 1);
        ++pairs;
      }
    }
  }
  return pairs == 0 ? 0.0 : static_cast<double>(same) / pairs;
}

}  // namespace itersr
