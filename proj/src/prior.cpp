#include "priorwarp/prior.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "priorwarp/errors.hpp"

namespace pw {

Volume normalize_logits(const Volume& logits) {
    logits.check_finite("prior logits");
    const std::size_t C = logits.channels();
    const std::size_t n = logits.dims().voxels();
    Volume out(C, logits.dims(), logits.spacing());
    std::vector<double> e(C);
    for (std::size_t v = 0; v < n; ++v) {
        // Shift by the largest logit, background included, before exponentiating.
        double mx = 0.0;
        for (std::size_t c = 0; c < C; ++c) mx = std::max(mx, logits.channel(c)[v]);
        double z = std::exp(-mx);
        for (std::size_t c = 0; c < C; ++c) {
            e[c] = std::exp(logits.channel(c)[v] - mx);
            z += e[c];
        }
        for (std::size_t c = 0; c < C; ++c) out.channel(c)[v] = e[c] / z;
    }
    return out;
}

Volume normalize(const AnatomicalPrior& prior) { return normalize_logits(prior.logits); }

Volume normalize_backward(const Volume& probs, const Volume& grad_probs) {
    if (probs.channels() != grad_probs.channels() || !(probs.dims() == grad_probs.dims())) {
        throw ArgumentError("normalize_backward: shape mismatch");
    }
    const std::size_t C = probs.channels();
    const std::size_t n = probs.dims().voxels();
    Volume out(C, probs.dims(), probs.spacing());
    for (std::size_t v = 0; v < n; ++v) {
        // Background has a fixed logit, so only foreground terms enter the sum.
        double s = 0.0;
        for (std::size_t c = 0; c < C; ++c) s += grad_probs.channel(c)[v] * probs.channel(c)[v];
        for (std::size_t k = 0; k < C; ++k) {
            out.channel(k)[v] = probs.channel(k)[v] * (grad_probs.channel(k)[v] - s);
        }
    }
    return out;
}

AnatomicalPrior init_prior(std::size_t c_cls, Dims dims, std::uint64_t seed) {
    AnatomicalPrior p{Volume(c_cls, dims), seed};
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, kPriorInitScale);
    for (double& x : p.logits.data()) x = dist(rng);
    return p;
}

AnatomicalPrior prior_from_labels(const LabelMap& lm, std::size_t c_cls, double confidence) {
    if (lm.max_label() > c_cls) throw ArgumentError("prior_from_labels: label exceeds c_cls");
    AnatomicalPrior p{Volume(c_cls, lm.dims(), lm.spacing()), 0};
    const auto& labels = lm.labels();
    for (std::size_t c = 0; c < c_cls; ++c) {
        auto ch = p.logits.channel(c);
        for (std::size_t v = 0; v < labels.size(); ++v) ch[v] = labels[v] == c + 1 ? confidence : -confidence;
    }
    return p;
}

} // namespace pw
