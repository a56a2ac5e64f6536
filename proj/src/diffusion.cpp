#include "itersr/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "itersr/error.hpp"
#include "itersr/rng.hpp"

namespace itersr {

int MaskGrid::count() const {
  return static_cast<int>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

void check_state(const DiffusionState& state, Token mask_id) {
  require(state.tokens.width == state.mask.width && state.tokens.height == state.mask.height,
          "state token/mask shape mismatch");
  for (int i = 0; i < state.tokens.cells(); ++i) {
    require((state.tokens[i] == mask_id) == (state.mask[i] == 0),
            "state invariant violated at cell " + std::to_string(i));
  }
}

DiffusionState forward_mask(const TokenGrid& clean, Token mask_id, double r, const ScheduleSpec& spec,
                            std::uint64_t seed) {
  require(!clean.contains(mask_id), "forward_mask input already contains the mask token");
  const int cells = clean.cells();
  const int masked = mask_count(spec, r, cells);

  std::vector<int> order(static_cast<std::size_t>(cells));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (int i = 0; i < masked; ++i) {
    const auto j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(cells - i)));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }

  DiffusionState state{clean, MaskGrid(clean.width, clean.height, 1), 0};
  for (int i = 0; i < masked; ++i) {
    const int cell = order[static_cast<std::size_t>(i)];
    state.tokens[cell] = mask_id;
    state.mask[cell] = 0;
  }
  state.step = std::clamp(static_cast<int>(std::ceil(r * spec.steps)), 0, spec.steps);
  return state;
}

TokenGrid apply_mask(const TokenGrid& tokens, const MaskGrid& mask, Token mask_id) {
  require(tokens.width == mask.width && tokens.height == mask.height, "apply_mask shape mismatch");
  TokenGrid out = tokens;
  for (int i = 0; i < out.cells(); ++i) {
    if (mask[i] == 0) out[i] = mask_id;
  }
  return out;
}

}  // namespace itersr
