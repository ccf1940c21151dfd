#pragma once

// Direct per-case fitting of deformation parameters and the alternating
// prior/parameter regime used to learn the anatomical prior.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "priorwarp/deform.hpp"
#include "priorwarp/losses.hpp"
#include "priorwarp/metrics.hpp"
#include "priorwarp/prior.hpp"

namespace pw {

struct AdamWHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-5;
};

// Adaptive-moment update with bias correction and decoupled weight decay:
//   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
//   p <- p - lr (m_hat / (sqrt(v_hat) + eps) + wd p)
class AdamW {
  public:
    AdamW(std::size_t n, AdamWHyper hyper);

    // Throws ArgumentError on a size mismatch, NumericError on non-finite grads.
    void step(std::span<double> params, std::span<const double> grads, double lr);

    std::size_t size() const { return m_.size(); }
    std::uint64_t steps() const { return t_; }
    const AdamWHyper& hyper() const { return hyper_; }

  private:
    AdamWHyper hyper_;
    std::vector<double> m_, v_;
    std::uint64_t t_ = 0;
};

struct FitConfig {
    std::size_t iters = 1000;
    std::size_t warmup_iters = 50;
    double lr_params = 3e-4;
    double lr_prior = 1e-3;
    double weight_decay = 1e-5;
    double gamma = 0.5;
    double lambda = 1e-5;
    double eps = kDiceEps;
    std::size_t param_span = 50;
    std::size_t prior_span = 10;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    double tau = kDefaultNsdTolerance;  // NSD tolerance for the reports

    LossConfig loss() const { return {gamma, lambda, eps}; }
    // Throws ArgumentError naming the offending field.
    void validate() const;
};

// Linear warmup from 0 over warmup_iters steps, then cosine annealing to 0 at iters.
double lr_at(double base_lr, std::size_t warmup_iters, std::size_t iters, std::size_t t);
inline double lr_at(const FitConfig& cfg, double base_lr, std::size_t t) {
    return lr_at(base_lr, cfg.warmup_iters, cfg.iters, t);
}

enum class Phase { params, prior };

struct TrailEntry {
    std::size_t iter = 0;
    Phase phase = Phase::params;
    LossBreakdown loss;
    double lr = 0.0;
};

struct FitReport {
    std::vector<TrailEntry> trail;
    DeformParams params;
    MetricReport initial_metrics;  // prior deformed by the initial parameters vs target
    MetricReport final_metrics;    // deformed prior vs target
    Volume deformed;               // final deformed prior probabilities
    double wall_seconds = 0.0;
};

// Optimises (theta, delta) with the prior frozen. Throws NumericError with the
// iteration index if the loss or parameters stop being finite.
FitReport fit_case(const LabelMap& target, const Volume& prior_logits, const TpsSystem& sys, const FitConfig& cfg);
// Same, starting from the given parameters instead of the identity.
FitReport fit_case(const LabelMap& target, const Volume& prior_logits, const TpsSystem& sys, const FitConfig& cfg,
                   const DeformParams& init);

struct LearnResult {
    AnatomicalPrior prior;
    std::vector<FitReport> cases;
    std::vector<TrailEntry> trail;  // per iteration, loss averaged over cases
    double initial_mean_dice = 0.0;
    double final_mean_dice = 0.0;
    double wall_seconds = 0.0;
};

// Alternates param_span steps on every case's (theta, delta) with the prior
// frozen and prior_span steps on the prior logits with all (theta, delta)
// frozen, for cfg.iters iterations in total. The prior phase descends the
// deformed-prior Dice loss summed over cases.
LearnResult learn_prior(const std::vector<LabelMap>& cases, const AnatomicalPrior& init, const TpsSystem& sys,
                        const FitConfig& cfg);

// Mean per-class DSC over classes present in either map.
double mean_dice(const MetricReport& r);

} // namespace pw
