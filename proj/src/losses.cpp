#include "priorwarp/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "priorwarp/errors.hpp"
#include "priorwarp/prior.hpp"
#include "priorwarp/simd/kernels.hpp"

namespace pw {
namespace {

void check_same_shape(const Volume& a, const Volume& b, const char* what) {
    if (a.channels() != b.channels() || !(a.dims() == b.dims())) {
        throw ArgumentError(std::string(what) + ": shape mismatch");
    }
}

void require_finite(double x, const char* term) {
    if (!std::isfinite(x)) throw NumericError(std::string("non-finite ") + term);
}

void require_finite(const std::vector<Coord>& v, const char* term) {
    for (const Coord& c : v) {
        if (!std::isfinite(c.h) || !std::isfinite(c.w) || !std::isfinite(c.d)) {
            throw NumericError(std::string("non-finite ") + term);
        }
    }
}

struct DiceSums {
    double overlap, pred, truth;
};

DiceSums dice_sums(const Volume& y, const Volume& yhat, std::size_t c) {
    const auto& k = simd::kernels();
    const std::size_t n = y.dims().voxels();
    return {k.dot(yhat.channel(c).data(), y.channel(c).data(), n), k.sum(yhat.channel(c).data(), n),
            k.sum(y.channel(c).data(), n)};
}

} // namespace

double soft_dice(const Volume& y, const Volume& yhat, double eps) {
    check_same_shape(y, yhat, "soft_dice");
    const std::size_t C = y.channels();
    double acc = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
        const DiceSums s = dice_sums(y, yhat, c);
        acc += 2.0 * s.overlap / (s.pred + s.truth + eps);
    }
    return 1.0 - acc / static_cast<double>(C);
}

Volume soft_dice_grad(const Volume& y, const Volume& yhat, double eps) {
    check_same_shape(y, yhat, "soft_dice_grad");
    const std::size_t C = y.channels();
    const std::size_t n = y.dims().voxels();
    Volume g(C, y.dims(), y.spacing());
    for (std::size_t c = 0; c < C; ++c) {
        const DiceSums s = dice_sums(y, yhat, c);
        const double den = s.pred + s.truth + eps;
        const double a = -2.0 / (static_cast<double>(C) * den);
        const double b = 2.0 * s.overlap / (static_cast<double>(C) * den * den);
        auto gc = g.channel(c);
        auto yc = y.channel(c);
        for (std::size_t v = 0; v < n; ++v) gc[v] = a * yc[v] + b;
    }
    return g;
}

Centroids hard_centroids(const LabelMap& y, std::size_t c_cls) {
    std::vector<double> sh(c_cls, 0.0), sw(c_cls, 0.0), sd(c_cls, 0.0);
    std::vector<std::size_t> count(c_cls, 0);
    const Dims& dims = y.dims();
    std::size_t v = 0;
    for (std::size_t i = 0; i < dims.h; ++i) {
        for (std::size_t j = 0; j < dims.w; ++j) {
            for (std::size_t k = 0; k < dims.d; ++k, ++v) {
                const std::size_t l = y.labels()[v];
                if (l == 0 || l > c_cls) continue;
                sh[l - 1] += static_cast<double>(i);
                sw[l - 1] += static_cast<double>(j);
                sd[l - 1] += static_cast<double>(k);
                ++count[l - 1];
            }
        }
    }
    Centroids out(c_cls);
    for (std::size_t c = 0; c < c_cls; ++c) {
        if (count[c] == 0) continue;
        const double n = static_cast<double>(count[c]);
        out[c] = Coord{sh[c] / n, sw[c] / n, sd[c] / n};
    }
    return out;
}

Centroids soft_centroids(const Volume& vol, double mass_floor) {
    const Dims& dims = vol.dims();
    Centroids out(vol.channels());
    for (std::size_t c = 0; c < vol.channels(); ++c) {
        auto ch = vol.channel(c);
        // Reduce plane by plane so every axis sum is a fixed-order pass.
        double mass = 0.0, mh = 0.0, mw = 0.0, md = 0.0;
        std::size_t v = 0;
        for (std::size_t i = 0; i < dims.h; ++i) {
            double plane = 0.0, pw_ = 0.0, pd_ = 0.0;
            for (std::size_t j = 0; j < dims.w; ++j) {
                double row = 0.0, rd = 0.0;
                for (std::size_t k = 0; k < dims.d; ++k, ++v) {
                    const double x = ch[v];
                    if (x < 0.0) {
                        throw ArgumentError("soft_centroids: negative activation in channel " + std::to_string(c));
                    }
                    row += x;
                    rd += x * static_cast<double>(k);
                }
                plane += row;
                pw_ += row * static_cast<double>(j);
                pd_ += rd;
            }
            mass += plane;
            mh += plane * static_cast<double>(i);
            mw += pw_;
            md += pd_;
        }
        if (mass < mass_floor) continue;
        out[c] = Coord{mh / mass, mw / mass, md / mass};
    }
    return out;
}

double centroid_loss(const Centroids& pr, const Centroids& y) {
    const std::size_t C = std::min(pr.size(), y.size());
    double acc = 0.0;
    std::size_t shared = 0;
    for (std::size_t c = 0; c < C; ++c) {
        if (!pr[c] || !y[c]) continue;
        acc += norm(*pr[c] - *y[c]);
        ++shared;
    }
    return shared == 0 ? 0.0 : acc / static_cast<double>(shared);
}

double centroid_loss(const Volume& pr_affine, const LabelMap& y) {
    if (!(pr_affine.dims() == y.dims())) throw ArgumentError("centroid_loss: dims mismatch");
    return centroid_loss(soft_centroids(pr_affine), hard_centroids(y, pr_affine.channels()));
}

Volume centroid_loss_grad(const Volume& pr_affine, const Centroids& y, double weight) {
    const Dims& dims = pr_affine.dims();
    const std::size_t C = pr_affine.channels();
    Volume g(C, dims, pr_affine.spacing());
    const Centroids pr = soft_centroids(pr_affine);
    std::size_t shared = 0;
    for (std::size_t c = 0; c < C; ++c) shared += (c < y.size() && pr[c] && y[c]) ? 1 : 0;
    if (shared == 0 || weight == 0.0) return g;

    const auto& k = simd::kernels();
    const std::size_t n = dims.voxels();
    for (std::size_t c = 0; c < C; ++c) {
        if (c >= y.size() || !pr[c] || !y[c]) continue;
        const Coord diff = *pr[c] - *y[c];
        const double dist = norm(diff);
        if (dist == 0.0) continue;
        const double mass = k.sum(pr_affine.channel(c).data(), n);
        // d|g - y|/dv(p) = (g - y)/|g - y| . (p - g) / mass
        const Coord u = diff * (weight / (static_cast<double>(shared) * dist * mass));
        const Coord& gc = *pr[c];
        auto out = g.channel(c);
        std::size_t v = 0;
        for (std::size_t i = 0; i < dims.h; ++i) {
            const double th = u.h * (static_cast<double>(i) - gc.h);
            for (std::size_t j = 0; j < dims.w; ++j) {
                const double tw = th + u.w * (static_cast<double>(j) - gc.w);
                for (std::size_t kk = 0; kk < dims.d; ++kk, ++v) out[v] = tw + u.d * (static_cast<double>(kk) - gc.d);
            }
        }
    }
    return g;
}

double control_reg(const Displacements& disp) {
    double acc = 0.0;
    for (const Coord& d : disp.delta) acc += norm(d);
    return acc;
}

LossBreakdown total_loss(const LabelMap& y, const Volume* yhat_pred, const Volume& pr_deformed, const Volume& pr_affine,
                         const Displacements& disp, const LossConfig& cfg) {
    check_same_shape(pr_deformed, pr_affine, "total_loss");
    if (!(y.dims() == pr_deformed.dims())) throw ArgumentError("total_loss: label map dims mismatch");
    const Volume onehot = one_hot(y, pr_deformed.channels());
    LossBreakdown b;
    if (yhat_pred != nullptr) b.dice_pred = soft_dice(onehot, *yhat_pred, cfg.eps);
    b.dice_prior = soft_dice(onehot, pr_deformed, cfg.eps);
    b.centroid = centroid_loss(pr_affine, y);
    b.reg = control_reg(disp);
    b.total = b.dice_pred + b.dice_prior + cfg.gamma * b.centroid + cfg.lambda * b.reg;
    return b;
}

FitTarget::FitTarget(LabelMap lm, std::size_t c_cls)
    : labels(std::move(lm)), onehot(one_hot(labels, c_cls)), centroids(hard_centroids(labels, c_cls)) {}

Evaluation evaluate_probs(const Volume& probs, const DeformParams& params, const DeformPipeline& pipe,
                          const FitTarget& target, const LossConfig& cfg, bool want_prior_grad, const TermMask& mask) {
    check_same_shape(probs, target.onehot, "evaluate");
    Evaluation ev;
    ev.forward = pipe.forward(probs, params);

    LossBreakdown& b = ev.loss;
    b.dice_prior = soft_dice(target.onehot, ev.forward.deformed, cfg.eps);
    require_finite(b.dice_prior, "dice_prior");
    b.centroid = centroid_loss(soft_centroids(ev.forward.affine), target.centroids);
    require_finite(b.centroid, "centroid");
    b.reg = control_reg(params.disp);
    require_finite(b.reg, "reg");
    b.total = b.dice_pred + b.dice_prior + cfg.gamma * b.centroid + cfg.lambda * b.reg;
    require_finite(b.total, "total");

    Volume g_deformed = soft_dice_grad(target.onehot, ev.forward.deformed, cfg.eps);
    if (mask.dice != 1.0) {
        for (double& x : g_deformed.data()) x *= mask.dice;
    }
    const double wc = mask.centroid * cfg.gamma;
    Volume g_affine_extra;
    const Volume* extra = nullptr;
    if (wc != 0.0) {
        g_affine_extra = centroid_loss_grad(ev.forward.affine, target.centroids, wc);
        extra = &g_affine_extra;
    }

    DeformBackward bw = pipe.backward(probs, params, ev.forward, g_deformed, extra, want_prior_grad);

    const double wr = mask.reg * cfg.lambda;
    if (wr != 0.0) {
        for (std::size_t i = 0; i < params.disp.size(); ++i) {
            const double r = norm(params.disp.delta[i]);
            if (r > 0.0) {
                const Coord& d = params.disp.delta[i];
                bw.d_delta[i] = bw.d_delta[i] + d * (wr / r);
            }
        }
    }
    require_finite(bw.d_theta, "d_theta");
    require_finite(bw.d_delta, "d_delta");
    ev.grads.d_theta = std::move(bw.d_theta);
    ev.grads.d_delta = std::move(bw.d_delta);
    if (want_prior_grad) {
        bw.d_probs.check_finite("d_prior");
        ev.grads.d_prior = std::move(bw.d_probs);
    }
    return ev;
}

Evaluation grad_total(const Volume& prior_logits, const DeformParams& params, const DeformPipeline& pipe,
                      const FitTarget& target, const LossConfig& cfg, const TermMask& mask) {
    const Volume probs = normalize_logits(prior_logits);
    Evaluation ev = evaluate_probs(probs, params, pipe, target, cfg, true, mask);
    ev.grads.d_prior = normalize_backward(probs, ev.grads.d_prior);
    ev.grads.d_prior.check_finite("d_prior");
    return ev;
}

} // namespace pw
