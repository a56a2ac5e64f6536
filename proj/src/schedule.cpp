#include "itersr/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "itersr/error.hpp"

namespace itersr {

ScheduleKind parse_schedule_kind(std::string_view text) {
  if (text == "cosine") return ScheduleKind::cosine;
  if (text == "linear") return ScheduleKind::linear;
  throw Error("unknown schedule kind '" + std::string(text) + "' (expected cosine or linear)");
}

std::string to_string(ScheduleKind kind) {
  return kind == ScheduleKind::cosine ? "cosine" : "linear";
}

double gamma(const ScheduleSpec& spec, double r) {
  require(r >= 0.0 && r <= 1.0, "schedule ratio must lie in [0, 1], got " + std::to_string(r));
  if (r == 0.0) return 0.0;
  if (r == 1.0) return 1.0;
  switch (spec.kind) {
    case ScheduleKind::cosine:
      return std::sin(std::numbers::pi * r / 2.0);
    case ScheduleKind::linear:
      return r;
  }
  return r;
}

int mask_count(const ScheduleSpec& spec, double r, int cells) {
  require(cells >= 1, "cell count must be >= 1");
  const double raw = std::ceil(gamma(spec, r) * cells);
  return std::clamp(static_cast<int>(raw), 0, cells);
}

int unmask_count(const ScheduleSpec& spec, int t, int cells) {
  require(spec.steps >= 1, "schedule needs T >= 1");
  require(t >= 1 && t <= spec.steps,
          "step " + std::to_string(t) + " outside [1, " + std::to_string(spec.steps) + "]");
  require(cells >= 1, "cell count must be >= 1");
  const double ratio = static_cast<double>(t - 1) / spec.steps;
  const double raw = std::ceil((1.0 - gamma(spec, ratio)) * cells);
  return std::clamp(static_cast<int>(raw), 0, cells);
}

}  // namespace itersr
