#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "idiomark/errors.hpp"

namespace idiomark {

/// Linear warmup to base_lr over the first ceil(warmup_fraction *
/// total_steps) steps, then cosine decay to zero at step == total_steps.
/// step counts completed progress: lr_at(0) == 0 and the curve is
/// continuous (value base_lr) at the warmup boundary.
inline double lr_at(int64_t step, int64_t total_steps, double base_lr,
                    double warmup_fraction) {
  if (total_steps < 1) throw ContractError("lr_at: total_steps must be >= 1");
  if (step < 0 || step > total_steps)
    throw ContractError("lr_at: step out of [0, total_steps]");
  const int64_t warmup = static_cast<int64_t>(
      std::ceil(warmup_fraction * static_cast<double>(total_steps)));
  if (step <= warmup) {
    if (warmup == 0) return base_lr;
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup);
  }
  const double t = static_cast<double>(step - warmup) /
                   static_cast<double>(total_steps - warmup);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

}  // namespace idiomark
