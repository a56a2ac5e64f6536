#pragma once

#include <cstdint>
#include <vector>

#include "itersr/schedule.hpp"
#include "itersr/token_core.hpp"

namespace itersr {

/// Binary grid; 1 = kept / trusted, 0 = masked.
struct MaskGrid {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  MaskGrid() = default;
  MaskGrid(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), bits(static_cast<std::size_t>(w) * h, fill) {}

  int cells() const { return width * height; }
  int count() const;
  std::uint8_t operator[](int i) const { return bits[static_cast<std::size_t>(i)]; }
  std::uint8_t& operator[](int i) { return bits[static_cast<std::size_t>(i)]; }

  bool operator==(const MaskGrid&) const = default;
};

/// Token grid, trust mask, and step index the reverse process advances.
/// Invariant: tokens[i] == mask_id exactly where mask[i] == 0.
struct DiffusionState {
  TokenGrid tokens;
  MaskGrid mask;
  int step = 0;
};

/// Throws unless tokens == mask_id <=> mask == 0 holds everywhere.
void check_state(const DiffusionState& state, Token mask_id);

/// Masks exactly mask_count(spec, r, cells) cells, chosen uniformly without
/// replacement by a seeded partial Fisher-Yates shuffle.
DiffusionState forward_mask(const TokenGrid& clean, Token mask_id, double r, const ScheduleSpec& spec,
                            std::uint64_t seed);

/// Cells with mask 0 become mask_id; the rest keep their token.
TokenGrid apply_mask(const TokenGrid& tokens, const MaskGrid& mask, Token mask_id);

}  // namespace itersr
