#pragma once

// Learnable anatomical prior: unconstrained per-class logits with an implicit
// background logit fixed at zero. Probabilities are the foreground entries of
// softmax(0, l_1, ..., l_C) at every voxel.

#include <cstdint>

#include "priorwarp/volume.hpp"

namespace pw {

struct AnatomicalPrior {
    Volume logits;
    std::uint64_t seed = 0;

    std::size_t classes() const { return logits.channels(); }
};

// Foreground softmax probabilities (background logit 0).
Volume normalize(const AnatomicalPrior& prior);
Volume normalize_logits(const Volume& logits);

// Backpropagates d(loss)/d(probabilities) to d(loss)/d(logits) given the
// probabilities produced by normalize_logits.
Volume normalize_backward(const Volume& probs, const Volume& grad_probs);

inline constexpr double kPriorInitScale = 0.01;

// Seeded zero-mean normal logits with standard deviation kPriorInitScale.
AnatomicalPrior init_prior(std::size_t c_cls, Dims dims, std::uint64_t seed);

// Logits that put +confidence on each voxel's own class and -confidence on
// every other foreground channel, so normalize() is close to one_hot(lm).
AnatomicalPrior prior_from_labels(const LabelMap& lm, std::size_t c_cls, double confidence = 8.0);

} // namespace pw
