#pragma once

#include <string>
#include <string_view>

namespace itersr {

enum class ScheduleKind { cosine, linear };

/// Mask-scheduling function gamma and total reverse step count T.
struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::cosine;
  int steps = 8;
};

ScheduleKind parse_schedule_kind(std::string_view text);
std::string to_string(ScheduleKind kind);

/// gamma(r): sin(pi r / 2) for cosine, r for linear. Throws for r outside [0, 1].
double gamma(const ScheduleSpec& spec, double r);

/// ceil(gamma(r) * cells), clamped to [0, cells].
int mask_count(const ScheduleSpec& spec, double r, int cells);

/// Tokens kept after reverse step t in [1, T]: ceil((1 - gamma((t - 1) / T)) * cells).
/// Equals `cells` at t = 1, so the reverse process always ends fully unmasked.
int unmask_count(const ScheduleSpec& spec, int t, int cells);

}  // namespace itersr
