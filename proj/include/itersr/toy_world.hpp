#pragma once

#include <cstdint>

#include "itersr/imaging.hpp"
#include "itersr/nets.hpp"
#include "itersr/token_core.hpp"

namespace itersr {

/// Synthetic restoration task: Potts-smoothed token grids over a pixel-tile
/// codebook, rendered to images and degraded.
struct WorldConfig {
  int width = 16;
  int height = 16;
  int codes = 32;
  int tile = 4;
  int sweeps = 6;
  double coupling = 3.0;
  double texture = 0.12;
  DegradeSpec degrade{1.0, 0.1, 2, false};
};

struct Example {
  TokenGrid hq_tokens;   // S_h
  Image hq_image;
  Image lq_image;
  TokenGrid lq_tokens;   // LQ image re-encoded with the codebook
};

class ToyWorld {
 public:
  ToyWorld(WorldConfig config, std::uint64_t seed);

  const WorldConfig& config() const { return config_; }
  const Codebook& codebook() const { return book_; }

  /// Gibbs sweeps of a Potts model (4-neighborhood, coupling J) started from
  /// i.i.d. uniform tokens, in raster order.
  TokenGrid sample_tokens(std::uint64_t seed) const;

  /// HQ tokens -> HQ image -> degraded LQ image -> re-encoded LQ tokens.
  Example make_example(std::uint64_t seed) const;
  Example make_example(TokenGrid hq_tokens, std::uint64_t seed) const;

  /// E_l input for an LQ image in the model's input mode.
  CellFeatures restoration_input(const Image& lq_image, const ModelSpec& spec) const;

 private:
  WorldConfig config_;
  Codebook book_;
};

/// E_l input for an LQ image given the codebook and tile size.
CellFeatures restoration_input(const Image& lq_image, const Codebook& book, int tile, const ModelSpec& spec);

/// Fraction of horizontally / vertically adjacent cell pairs holding the same token.
double neighbor_agreement(const TokenGrid& tokens);

}  // namespace itersr
