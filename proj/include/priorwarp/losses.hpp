#pragma once

#include <optional>
#include <vector>

#include "priorwarp/deform.hpp"
#include "priorwarp/volume.hpp"

namespace pw {

inline constexpr double kDiceEps = 1e-5;
inline constexpr double kCentroidMassFloor = 1e-8;

struct LossConfig {
    double gamma = 0.5;   // centroid weight
    double lambda = 1e-5; // control-displacement weight
    double eps = kDiceEps;
};

struct LossBreakdown {
    double dice_pred = 0.0;
    double dice_prior = 0.0;
    double centroid = 0.0;
    double reg = 0.0;
    double total = 0.0;
};

// 1 - (1/C) sum_c 2 sum(yhat*y) / (sum yhat + sum y + eps). Classes empty in
// both inputs contribute a zero overlap term (loss 1 for that class).
double soft_dice(const Volume& y, const Volume& yhat, double eps = kDiceEps);
Volume soft_dice_grad(const Volume& y, const Volume& yhat, double eps = kDiceEps);

using Centroids = std::vector<std::optional<Coord>>;

// Mean grid coordinate per class 1..c_cls; absent classes are nullopt.
Centroids hard_centroids(const LabelMap& y, std::size_t c_cls);
// Mass-weighted mean coordinate per channel; channels lighter than mass_floor
// are nullopt. Throws ArgumentError on negative activations.
Centroids soft_centroids(const Volume& v, double mass_floor = kCentroidMassFloor);

// Mean Euclidean distance between soft centroids of pr_affine and hard
// centroids of y over classes present in both.
double centroid_loss(const Volume& pr_affine, const LabelMap& y);
double centroid_loss(const Centroids& pr, const Centroids& y);
// d(centroid_loss)/d(pr_affine), scaled by weight.
Volume centroid_loss_grad(const Volume& pr_affine, const Centroids& y, double weight = 1.0);

// sum_i |delta_i|
double control_reg(const Displacements& disp);

// Breakdown of the weighted objective. yhat_pred is the separate network
// prediction; pass nullptr when fitting the deformation alone.
LossBreakdown total_loss(const LabelMap& y, const Volume* yhat_pred, const Volume& pr_deformed, const Volume& pr_affine,
                         const Displacements& disp, const LossConfig& cfg);

// Ground truth with the derived quantities every evaluation needs.
struct FitTarget {
    LabelMap labels;
    Volume onehot;
    Centroids centroids;

    FitTarget(LabelMap lm, std::size_t c_cls);
};

struct Gradients {
    std::vector<Coord> d_theta;
    std::vector<Coord> d_delta;
    Volume d_prior;  // w.r.t. logits (grad_total) or probabilities (evaluate_probs)
};

struct Evaluation {
    LossBreakdown loss;
    Gradients grads;
    DeformForward forward;
};

// Per-term multipliers; the default reproduces the total objective. Setting
// one to 1 and the others to 0 isolates a single term's gradient.
struct TermMask {
    double dice = 1.0;
    double centroid = 1.0;
    double reg = 1.0;
};

// Loss and gradients for prior probabilities (not logits).
Evaluation evaluate_probs(const Volume& probs, const DeformParams& params, const DeformPipeline& pipe,
                          const FitTarget& target, const LossConfig& cfg, bool want_prior_grad,
                          const TermMask& mask = {});

// Total loss and its gradients w.r.t. shifts, displacements and prior logits,
// through softmax -> class shifts -> TPS warp. The centroid term is taken on
// the shifted (pre-TPS) volume. Throws NumericError naming the first
// non-finite term.
Evaluation grad_total(const Volume& prior_logits, const DeformParams& params, const DeformPipeline& pipe,
                      const FitTarget& target, const LossConfig& cfg, const TermMask& mask = {});

} // namespace pw
