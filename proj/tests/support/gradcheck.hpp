#pragma once

// Central finite-difference check of grad_total on small random instances.

#include <cstdint>

namespace oracle {

struct GradCheck {
    double theta = 0.0;   // max relative error over all theta components
    double delta = 0.0;
    double logits = 0.0;
    double worst() const;
};

inline constexpr double kFdStep = 1e-4;
// Denominator floor for the relative error |a - n| / max(|a|, |n|, floor).
inline constexpr double kRelFloor = 1e-6;
// Minimum distance of every sampled coordinate from a trilinear kink.
inline constexpr double kKinkMargin = 1e-3;

// C = 2, 6^3 volume, 2x2x2 control lattice, random logits, target, shifts
// (fractional parts in [0.2, 0.8]) and displacements (redrawn until every
// warped coordinate keeps kKinkMargin away from integer values).
GradCheck grad_check_instance(std::uint64_t seed);

} // namespace oracle
