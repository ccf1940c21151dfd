#include "priorwarp/optimizer.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <thread>

#include "priorwarp/errors.hpp"

namespace pw {

AdamW::AdamW(std::size_t n, AdamWHyper hyper) : hyper_(hyper), m_(n, 0.0), v_(n, 0.0) {}

void AdamW::step(std::span<double> params, std::span<const double> grads, double lr) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
        throw ArgumentError("AdamW: expected " + std::to_string(m_.size()) + " parameters");
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!std::isfinite(grads[i])) throw NumericError("AdamW: non-finite gradient at index " + std::to_string(i));
    }
    ++t_;
    const double b1 = hyper_.beta1, b2 = hyper_.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        m_[i] = b1 * m_[i] + (1.0 - b1) * g;
        v_[i] = b2 * v_[i] + (1.0 - b2) * g * g;
        const double m_hat = m_[i] / bc1;
        const double v_hat = v_[i] / bc2;
        params[i] -= lr * (m_hat / (std::sqrt(v_hat) + hyper_.eps) + hyper_.weight_decay * params[i]);
    }
}

void FitConfig::validate() const {
    if (param_span < 1) throw ArgumentError("param_span must be >= 1");
    if (prior_span < 1) throw ArgumentError("prior_span must be >= 1");
    if (!(lr_params > 0.0)) throw ArgumentError("lr_params must be > 0");
    if (!(lr_prior > 0.0)) throw ArgumentError("lr_prior must be > 0");
    if (!(weight_decay >= 0.0)) throw ArgumentError("weight_decay must be >= 0");
    if (!(gamma >= 0.0)) throw ArgumentError("gamma must be >= 0");
    if (!(lambda >= 0.0)) throw ArgumentError("lambda must be >= 0");
    if (!(eps > 0.0)) throw ArgumentError("eps must be > 0");
    if (!(tau >= 0.0)) throw ArgumentError("tau must be >= 0");
    if (threads < 1) throw ArgumentError("threads must be >= 1");
}

double lr_at(double base_lr, std::size_t warmup_iters, std::size_t iters, std::size_t t) {
    if (t >= iters) return 0.0;
    if (t < warmup_iters) return base_lr * static_cast<double>(t) / static_cast<double>(warmup_iters);
    const double progress = static_cast<double>(t - warmup_iters) / static_cast<double>(iters - warmup_iters);
    return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

double mean_dice(const MetricReport& r) { return r.mean_dsc.value_or(0.0); }

namespace {

using Clock = std::chrono::steady_clock;

std::vector<double> flatten(const DeformParams& p) {
    std::vector<double> out;
    out.reserve(3 * (p.shifts.size() + p.disp.size()));
    for (const Coord& c : p.shifts.theta) out.insert(out.end(), {c.h, c.w, c.d});
    for (const Coord& c : p.disp.delta) out.insert(out.end(), {c.h, c.w, c.d});
    return out;
}

std::vector<double> flatten(const Gradients& g) {
    std::vector<double> out;
    out.reserve(3 * (g.d_theta.size() + g.d_delta.size()));
    for (const Coord& c : g.d_theta) out.insert(out.end(), {c.h, c.w, c.d});
    for (const Coord& c : g.d_delta) out.insert(out.end(), {c.h, c.w, c.d});
    return out;
}

void unflatten(std::span<const double> flat, DeformParams& p) {
    std::size_t k = 0;
    for (Coord& c : p.shifts.theta) c = {flat[k], flat[k + 1], flat[k + 2]}, k += 3;
    for (Coord& c : p.disp.delta) c = {flat[k], flat[k + 1], flat[k + 2]}, k += 3;
}

MetricReport metrics_for(const Volume& deformed, const LabelMap& target, const FitConfig& cfg) {
    const LabelMap pred = channel_argmax(deformed);
    return evaluate_metrics(pred, target, deformed.channels(), cfg.tau, target.spacing());
}

// One case's optimisation state, shared by fit_case and learn_prior.
struct CaseState {
    FitTarget target;
    DeformParams params;
    std::vector<double> flat;
    AdamW opt;
    std::vector<TrailEntry> trail;

    CaseState(const LabelMap& lm, std::size_t c_cls, std::size_t n_control, double wd)
        : target(lm, c_cls), params(DeformParams::identity(c_cls, n_control)), flat(flatten(params)),
          opt(flat.size(), AdamWHyper{0.9, 0.999, 1e-8, wd}) {}

    void step(const Volume& probs, const DeformPipeline& pipe, const LossConfig& loss, std::size_t iter, double lr) {
        Evaluation ev;
        try {
            ev = evaluate_probs(probs, params, pipe, target, loss, false);
        } catch (const NumericError& e) {
            throw NumericError("diverged at iteration " + std::to_string(iter) + ": " + e.what());
        }
        trail.push_back({iter, Phase::params, ev.loss, lr});
        const std::vector<double> g = flatten(ev.grads);
        opt.step(flat, g, lr);
        unflatten(flat, params);
        for (double x : flat) {
            if (!std::isfinite(x)) throw NumericError("diverged at iteration " + std::to_string(iter) + ": non-finite parameter");
        }
        try {
            validate_shifts(params.shifts, pipe.dims());
            pipe.system().validate(params.disp);
        } catch (const NumericError& e) {
            throw NumericError("diverged at iteration " + std::to_string(iter) + ": " + e.what());
        }
    }
};

void check_case(const LabelMap& lm, const Volume& logits, const TpsSystem& sys) {
    if (!(lm.dims() == logits.dims())) throw ArgumentError("target dims do not match the prior");
    if (lm.max_label() > logits.channels()) throw ArgumentError("target has more classes than the prior");
    if (sys.grid().is_lattice()) {
        const Coord& last = sys.grid().points.back();
        const Dims& d = lm.dims();
        if (last.h != static_cast<double>(d.h - 1) || last.w != static_cast<double>(d.w - 1) ||
            last.d != static_cast<double>(d.d - 1)) {
            throw ArgumentError("control lattice does not span the target volume");
        }
    }
}

template <class Fn>
void for_each_case(std::size_t n, std::size_t threads, Fn&& fn) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t k = 0; k < n; ++k) fn(k);
        return;
    }
    const std::size_t workers = std::min(threads, n);
    std::vector<std::exception_ptr> errors(workers);
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t k = w; k < n; k += workers) fn(k);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

} // namespace

FitReport fit_case(const LabelMap& target, const Volume& prior_logits, const TpsSystem& sys, const FitConfig& cfg) {
    return fit_case(target, prior_logits, sys, cfg, DeformParams::identity(prior_logits.channels(), sys.size()));
}

FitReport fit_case(const LabelMap& target, const Volume& prior_logits, const TpsSystem& sys, const FitConfig& cfg,
                   const DeformParams& init) {
    cfg.validate();
    check_case(target, prior_logits, sys);
    const auto start = Clock::now();
    const std::size_t C = prior_logits.channels();
    const Volume probs = normalize_logits(prior_logits);
    const DeformPipeline pipe(sys, target.dims());
    const LossConfig loss = cfg.loss();

    if (init.shifts.size() != C || init.disp.size() != sys.size()) {
        throw ArgumentError("initial parameters do not match the prior classes and control grid");
    }
    validate_shifts(init.shifts, target.dims());
    sys.validate(init.disp);
    CaseState st(target, C, sys.size(), cfg.weight_decay);
    st.params = init;
    st.flat = flatten(init);
    FitReport report;
    report.initial_metrics = metrics_for(pipe.forward(probs, init).deformed, target, cfg);
    st.trail.reserve(cfg.iters);
    for (std::size_t t = 0; t < cfg.iters; ++t) st.step(probs, pipe, loss, t, lr_at(cfg, cfg.lr_params, t + 1));

    report.trail = std::move(st.trail);
    report.params = st.params;
    report.deformed = pipe.forward(probs, st.params).deformed;
    report.final_metrics = metrics_for(report.deformed, target, cfg);
    report.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    return report;
}

LearnResult learn_prior(const std::vector<LabelMap>& cases, const AnatomicalPrior& init, const TpsSystem& sys,
                        const FitConfig& cfg) {
    cfg.validate();
    if (cases.empty()) throw ArgumentError("learn_prior needs at least one case");
    for (const auto& lm : cases) check_case(lm, init.logits, sys);
    const auto start = Clock::now();
    const std::size_t C = init.classes();
    const Dims dims = init.logits.dims();
    const DeformPipeline pipe(sys, dims);
    const LossConfig loss = cfg.loss();

    std::vector<CaseState> states;
    states.reserve(cases.size());
    for (const auto& lm : cases) states.emplace_back(lm, C, sys.size(), cfg.weight_decay);

    LearnResult result;
    result.prior = init;
    Volume probs = normalize_logits(result.prior.logits);
    std::vector<MetricReport> initial(cases.size());
    for (std::size_t k = 0; k < cases.size(); ++k) initial[k] = metrics_for(probs, cases[k], cfg);

    // Each phase runs its own warmup/cosine schedule over its share of iterations.
    const std::size_t cycle = cfg.param_span + cfg.prior_span;
    std::size_t param_total = 0, prior_total = 0;
    for (std::size_t t = 0; t < cfg.iters; ++t) (t % cycle < cfg.param_span ? param_total : prior_total)++;
    const std::size_t param_warm = std::min(cfg.warmup_iters, param_total);
    const std::size_t prior_warm = std::min(cfg.warmup_iters * cfg.prior_span / cfg.param_span, prior_total);

    AdamW prior_opt(result.prior.logits.data().size(), AdamWHyper{0.9, 0.999, 1e-8, cfg.weight_decay});
    std::vector<Volume> case_grads(cases.size());
    std::vector<LossBreakdown> case_loss(cases.size());
    std::size_t param_step = 0, prior_step = 0;
    result.trail.reserve(cfg.iters);

    for (std::size_t t = 0; t < cfg.iters; ++t) {
        TrailEntry entry;
        entry.iter = t;
        if (t % cycle < cfg.param_span) {
            entry.phase = Phase::params;
            entry.lr = lr_at(cfg.lr_params, param_warm, param_total, ++param_step);
            for_each_case(states.size(), cfg.threads,
                          [&](std::size_t k) { states[k].step(probs, pipe, loss, t, entry.lr); });
            for (const auto& st : states) {
                const LossBreakdown& b = st.trail.back().loss;
                entry.loss.dice_prior += b.dice_prior;
                entry.loss.centroid += b.centroid;
                entry.loss.reg += b.reg;
                entry.loss.total += b.total;
            }
        } else {
            entry.phase = Phase::prior;
            entry.lr = lr_at(cfg.lr_prior, prior_warm, prior_total, ++prior_step);
            for_each_case(states.size(), cfg.threads, [&](std::size_t k) {
                Evaluation ev;
                try {
                    ev = evaluate_probs(probs, states[k].params, pipe, states[k].target, loss, true, TermMask{1.0, 0.0, 0.0});
                } catch (const NumericError& e) {
                    throw NumericError("diverged at iteration " + std::to_string(t) + ": " + e.what());
                }
                case_grads[k] = std::move(ev.grads.d_prior);
                case_loss[k] = ev.loss;
            });
            // Fixed case order keeps the summed gradient independent of threading.
            Volume grad_probs(C, dims);
            for (std::size_t k = 0; k < cases.size(); ++k) {
                for (std::size_t i = 0; i < grad_probs.data().size(); ++i) grad_probs.data()[i] += case_grads[k].data()[i];
                entry.loss.dice_prior += case_loss[k].dice_prior;
                entry.loss.centroid += case_loss[k].centroid;
                entry.loss.reg += case_loss[k].reg;
                entry.loss.total += case_loss[k].total;
            }
            const Volume grad_logits = normalize_backward(probs, grad_probs);
            prior_opt.step(result.prior.logits.data(), grad_logits.data(), entry.lr);
            try {
                probs = normalize_logits(result.prior.logits);
            } catch (const NumericError& e) {
                throw NumericError("diverged at iteration " + std::to_string(t) + ": " + e.what());
            }
        }
        const double n = static_cast<double>(cases.size());
        entry.loss.dice_prior /= n;
        entry.loss.centroid /= n;
        entry.loss.reg /= n;
        entry.loss.total /= n;
        result.trail.push_back(entry);
    }

    double init_sum = 0.0, final_sum = 0.0;
    result.cases.resize(cases.size());
    for (std::size_t k = 0; k < cases.size(); ++k) {
        FitReport& r = result.cases[k];
        r.trail = std::move(states[k].trail);
        r.params = states[k].params;
        r.deformed = pipe.forward(probs, r.params).deformed;
        r.initial_metrics = initial[k];
        r.final_metrics = metrics_for(r.deformed, cases[k], cfg);
        init_sum += mean_dice(r.initial_metrics);
        final_sum += mean_dice(r.final_metrics);
    }
    result.initial_mean_dice = init_sum / static_cast<double>(cases.size());
    result.final_mean_dice = final_sum / static_cast<double>(cases.size());
    result.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    return result;
}

} // namespace pw
