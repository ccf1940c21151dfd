// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.
//
//   priorwarp_acceptance [--only N[,N...]]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "flat.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "priorwarp/metrics.hpp"
#include "priorwarp/optimizer.hpp"
#include "priorwarp/params_io.hpp"
#include "priorwarp/phantom.hpp"
#include "priorwarp/run_config.hpp"
#include "priorwarp/tps.hpp"

using namespace pw;
using Clock = std::chrono::steady_clock;

namespace {

// Criterion tolerances.
constexpr double kTpsResidual = 1e-8;
constexpr double kIdentityRadial = 1e-10;
constexpr double kConstraint = 1e-8;
constexpr double kGradRel = 1e-4;
constexpr double kFlatDice = 1e-8;
constexpr double kFlatCentroid = 0.1;
constexpr double kMetricDist = 1e-12;
constexpr double kRecoveryDice = 0.95;
constexpr double kRecoveryTheta = 0.5;
constexpr std::size_t kRecoveryNeeded = 18;
constexpr std::size_t kMaxIters = 2000;
constexpr double kMeanImprovement = 0.2;
constexpr double kPriorGain = 0.3;
constexpr double kLargeShift = 6.0;

// Phantom source and prior sharpness for the recovery and prior experiments.
constexpr double kSourceSlope = 6.0;
constexpr std::size_t kSuiteCases = 20;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

void report(int id, const Outcome& o) {
    std::printf("criterion %d: %s  %s\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
}

template <class... Args>
std::string format(const char* f, Args... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// Criteria 1 and 2 share the same solves.
std::pair<Outcome, Outcome> tps_criteria() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(1001);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    double worst_map = 0.0, worst_constraint = 0.0, worst_radial = 0.0, worst_poly = 0.0;
    const Dims dims{32, 32, 32};
    for (std::size_t n : {2, 3, 4}) {
        const TpsSystem sys(ControlGrid::lattice(n, n, n, dims));
        const std::size_t N = sys.size();
        auto constraints = [&](const TpsCoefficients& c) {
            for (std::size_t ax = 0; ax < 3; ++ax) {
                double s = 0.0, sh = 0.0, sw = 0.0, sd = 0.0;
                for (std::size_t i = 0; i < N; ++i) {
                    const Coord& p = sys.grid().points[i];
                    s += c.radial(ax, i);
                    sh += c.radial(ax, i) * p.h;
                    sw += c.radial(ax, i) * p.w;
                    sd += c.radial(ax, i) * p.d;
                }
                worst_constraint = std::max({worst_constraint, std::abs(s), std::abs(sh), std::abs(sw), std::abs(sd)});
            }
        };
        const TpsCoefficients id = sys.solve(Displacements(N));
        constraints(id);
        for (std::size_t ax = 0; ax < 3; ++ax) {
            for (std::size_t i = 0; i < N; ++i) worst_radial = std::max(worst_radial, std::abs(id.radial(ax, i)));
            for (std::size_t k = 0; k < 4; ++k) {
                const double expect = k == ax + 1 ? 1.0 : 0.0;
                worst_poly = std::max(worst_poly, std::abs(id.poly(ax, k) - expect));
            }
        }
        for (int draw = 0; draw < 100; ++draw) {
            Displacements d(N);
            for (Coord& c : d.delta) c = {u(rng), u(rng), u(rng)};
            const TpsCoefficients coef = sys.solve(d);
            constraints(coef);
            for (std::size_t i = 0; i < N; ++i) {
                const Coord& p = sys.grid().points[i];
                const Coord got = map_point(sys, coef, p);
                const Coord want = p + d.delta[i];
                worst_map = std::max({worst_map, std::abs(got.h - want.h), std::abs(got.w - want.w), std::abs(got.d - want.d)});
            }
        }
    }
    const double t = seconds_since(t0);
    Outcome c1{worst_map < kTpsResidual && t < 30.0,
               format("max control-point residual %.3e (< %.0e), %.2f s (< 30 s)", worst_map, kTpsResidual, t)};
    Outcome c2{worst_radial < kIdentityRadial && worst_poly < kIdentityRadial && worst_constraint < kConstraint,
               format("identity radial %.3e, polynomial deviation %.3e (< %.0e); max constraint residual %.3e (< %.0e)",
                      worst_radial, worst_poly, kIdentityRadial, worst_constraint, kConstraint)};
    return {c1, c2};
}

Outcome gradient_criterion() {
    const auto t0 = Clock::now();
    double worst = 0.0;
    std::uint64_t worst_seed = 0;
    const int n = 100;
    for (int s = 1; s <= n; ++s) {
        const double w = oracle::grad_check_instance(static_cast<std::uint64_t>(s)).worst();
        if (w > worst) {
            worst = w;
            worst_seed = static_cast<std::uint64_t>(s);
        }
    }
    const double t = seconds_since(t0);
    return {worst < kGradRel && t < 120.0,
            format("%d instances, max relative error %.3e (seed %llu, < %.0e), %.1f s (< 120 s)", n, worst,
                   static_cast<unsigned long long>(worst_seed), kGradRel, t)};
}

Outcome flat_criterion() {
    int ok = 0;
    double worst_dice = 0.0, min_centroid = 1e300;
    for (std::uint64_t s = 1; s <= 20; ++s) {
        const oracle::FlatResult r = oracle::flat_landscape_case(s);
        worst_dice = std::max(worst_dice, r.dice_grad_inf);
        min_centroid = std::min(min_centroid, r.centroid_grad_norm);
        ok += r.min_gap >= oracle::kFlatMargin && r.dice_grad_inf < kFlatDice && r.centroid_grad_norm > kFlatCentroid &&
              r.dist_after < r.dist_before;
    }
    return {ok == 20, format("%d/20 cases; max |dL_dice/dtheta| %.3e (< %.0e), min |dL_centroid/dtheta| %.3f (> %.1f)",
                             ok, worst_dice, kFlatDice, min_centroid, kFlatCentroid)};
}

Outcome metric_criterion() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(5005);
    std::uniform_int_distribution<std::size_t> side(1, 8);
    std::uniform_real_distribution<double> fill(0.05, 0.7), sp(0.5, 2.0), tau(0.0, 3.0);
    int mismatches = 0;
    double worst = 0.0;
    for (int t = 0; t < 200; ++t) {
        const Dims dims{side(rng), side(rng), side(rng)};
        const std::size_t C = 3;
        const LabelMap a = oracle::random_labels(dims, C, fill(rng), rng);
        const LabelMap b = oracle::random_labels(dims, C, fill(rng), rng);
        const Spacing s{sp(rng), sp(rng), sp(rng)};
        const double tol = tau(rng);
        for (std::size_t c = 1; c <= C; ++c) {
            if (dsc(a, b, c) != oracle::dsc(a, b, c)) ++mismatches;
            const auto h = hd95(a, b, c, s), hr = oracle::hd95(a, b, c, s);
            if (h.has_value() != hr.has_value()) {
                ++mismatches;
            } else if (h) {
                worst = std::max(worst, std::abs(*h - *hr));
                if (std::abs(*h - *hr) >= kMetricDist) ++mismatches;
            }
            const auto n = nsd(a, b, c, tol, s), nr = oracle::nsd(a, b, c, tol, s);
            if (n.has_value() != nr.has_value() || (n && *n != *nr)) ++mismatches;
        }
    }
    const double t = seconds_since(t0);
    return {mismatches == 0 && t < 60.0,
            format("200 pairs x 3 classes, %d mismatches, max HD95 difference %.1e, %.2f s (< 60 s)", mismatches, worst, t)};
}

PhantomSpec recovery_spec(double max_theta = 2.0) {
    PhantomSpec s = PhantomSpec::default_suite();
    s.source_slope = kSourceSlope;
    s.max_theta = max_theta;
    return s;
}

FitConfig desk_config() {
    FitConfig f = fit_preset("desk");
    f.threads = 1;
    return f;
}

struct RecoveryRun {
    std::vector<FitReport> reports;
    std::vector<double> theta_err;
    double seconds = 0.0;
};

RecoveryRun run_recovery() {
    const PhantomSpec spec = recovery_spec();
    const PhantomSuite suite = generate_suite(spec, kSuiteCases);
    const TpsSystem sys(spec.control_grid());
    const AnatomicalPrior prior = smooth_prior(spec, kSourceSlope);
    const FitConfig cfg = desk_config();
    RecoveryRun run;
    const auto t0 = Clock::now();
    for (const PhantomCase& pc : suite.cases) {
        FitReport r = fit_case(pc.labels, prior.logits, sys, cfg);
        double err = 0.0;
        for (std::size_t c = 0; c < spec.c_cls; ++c) {
            const Coord d = r.params.shifts.theta[c] - pc.truth.shifts.theta[c];
            err = std::max({err, std::abs(d.h), std::abs(d.w), std::abs(d.d)});
        }
        run.theta_err.push_back(err);
        run.reports.push_back(std::move(r));
    }
    run.seconds = seconds_since(t0);
    return run;
}

std::pair<Outcome, Outcome> recovery_criteria(const RecoveryRun& run) {
    std::size_t ok = 0, improved = 0;
    double gain = 0.0, worst_gain = 1e300;
    std::ostringstream cases;
    for (std::size_t k = 0; k < run.reports.size(); ++k) {
        const double d0 = mean_dice(run.reports[k].initial_metrics), d1 = mean_dice(run.reports[k].final_metrics);
        const bool pass = d1 >= kRecoveryDice && run.theta_err[k] < kRecoveryTheta;
        ok += pass;
        improved += d1 > d0;
        gain += d1 - d0;
        worst_gain = std::min(worst_gain, d1 - d0);
        std::printf("  case %2zu: Dice %.4f -> %.4f, |theta - theta*|_inf %.3f%s\n", k, d0, d1, run.theta_err[k],
                    pass ? "" : "  (below target)");
    }
    const std::size_t n = run.reports.size();
    gain /= static_cast<double>(n);
    const std::size_t iters = run.reports.front().trail.size();
    Outcome c6{ok >= kRecoveryNeeded && iters <= kMaxIters && run.seconds < 600.0,
               format("%zu/%zu cases with Dice >= %.2f and theta error < %.1f (need %zu), %zu iterations, %.0f s (< 600 s)",
                      ok, n, kRecoveryDice, kRecoveryTheta, kRecoveryNeeded, iters, run.seconds)};
    Outcome c7{improved == n && gain >= kMeanImprovement,
               format("%zu/%zu cases improved (min gain %.4f), mean improvement %.4f (>= %.1f)", improved, n, worst_gain,
                      gain, kMeanImprovement)};
    return {c6, c7};
}

struct Learned {
    LearnResult result;
    double mean_theta_err = 0.0;  // mean over cases and classes of |theta - theta*|_inf
};

Learned run_learning(double max_theta, double gamma) {
    const PhantomSpec spec = recovery_spec(max_theta);
    const PhantomSuite suite = generate_suite(spec, kSuiteCases);
    std::vector<LabelMap> cases;
    for (const PhantomCase& pc : suite.cases) cases.push_back(pc.labels);
    const TpsSystem sys(spec.control_grid());
    FitConfig cfg = desk_config();
    cfg.gamma = gamma;
    Learned out{learn_prior(cases, init_prior(spec.c_cls, spec.dims, cfg.seed), sys, cfg)};
    double sum = 0.0;
    for (std::size_t k = 0; k < cases.size(); ++k) {
        for (std::size_t c = 0; c < spec.c_cls; ++c) {
            const Coord d = out.result.cases[k].params.shifts.theta[c] - suite.cases[k].truth.shifts.theta[c];
            sum += std::max({std::abs(d.h), std::abs(d.w), std::abs(d.d)});
        }
    }
    out.mean_theta_err = sum / static_cast<double>(cases.size() * spec.c_cls);
    return out;
}

bool same_report(const FitReport& a, const FitReport& b, const ControlGrid& grid) {
    return fit_report_to_json(a, grid) == fit_report_to_json(b, grid) && a.deformed.data() == b.deformed.data();
}

bool same_learning(const LearnResult& a, const LearnResult& b, const ControlGrid& grid) {
    if (a.prior.logits.data() != b.prior.logits.data() || a.cases.size() != b.cases.size()) return false;
    for (std::size_t k = 0; k < a.cases.size(); ++k) {
        if (!same_report(a.cases[k], b.cases[k], grid)) return false;
    }
    return true;
}

std::set<int> parse_only(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
            std::stringstream ss(argv[++i]);
            std::string tok;
            while (std::getline(ss, tok, ',')) only.insert(std::stoi(tok));
        }
    }
    if (only.empty()) only = {1, 2, 3, 4, 5, 6, 7, 8, 9};
    return only;
}

} // namespace

int main(int argc, char** argv) {
    const std::set<int> only = parse_only(argc, argv);
    auto want = [&](int id) { return only.count(id) > 0; };
    bool all = true;
    auto emit = [&](int id, const Outcome& o) {
        report(id, o);
        all = all && o.pass;
    };

    if (want(1) || want(2)) {
        const auto [c1, c2] = tps_criteria();
        if (want(1)) emit(1, c1);
        if (want(2)) emit(2, c2);
    }
    if (want(3)) emit(3, gradient_criterion());
    if (want(4)) emit(4, flat_criterion());
    if (want(5)) emit(5, metric_criterion());

    const ControlGrid grid = recovery_spec().control_grid();
    RecoveryRun recovery;
    if (want(6) || want(7) || want(9)) {
        recovery = run_recovery();
        const auto [c6, c7] = recovery_criteria(recovery);
        if (want(6)) emit(6, c6);
        if (want(7)) emit(7, c7);
    }

    LearnResult learned;
    if (want(8) || want(9)) {
        const auto t0 = Clock::now();
        learned = run_learning(2.0, 0.5).result;
        const double gain = learned.final_mean_dice - learned.initial_mean_dice;
        std::printf("  prior learning: mean Dice %.4f -> %.4f\n", learned.initial_mean_dice, learned.final_mean_dice);
        if (want(8)) {
            const Learned with_cl = run_learning(kLargeShift, 0.5);
            const Learned without_cl = run_learning(kLargeShift, 0.0);
            const LearnResult& with = with_cl.result;
            const LearnResult& without = without_cl.result;
            std::printf("  |theta*| <= %.0f: mean Dice gamma=0.5 %.4f, gamma=0 %.4f\n", kLargeShift, with.final_mean_dice,
                        without.final_mean_dice);
            std::printf("  |theta*| <= %.0f: mean |theta - theta*|_inf gamma=0.5 %.3f, gamma=0 %.3f voxels\n", kLargeShift,
                        with_cl.mean_theta_err, without_cl.mean_theta_err);
            const double t = seconds_since(t0);
            emit(8, {gain >= kPriorGain && without.final_mean_dice < with.final_mean_dice && t < 1200.0,
                     format("gain %.4f (>= %.1f); large shifts gamma=0 %.4f < gamma=0.5 %.4f; %.0f s (< 1200 s)", gain,
                            kPriorGain, without.final_mean_dice, with.final_mean_dice, t)});
        }
    }

    if (want(9)) {
        const RecoveryRun again = run_recovery();
        std::size_t same = 0;
        for (std::size_t k = 0; k < again.reports.size(); ++k) same += same_report(recovery.reports[k], again.reports[k], grid);
        const LearnResult relearned = run_learning(2.0, 0.5).result;
        const bool prior_same = same_learning(learned, relearned, grid);
        emit(9, {same == recovery.reports.size() && prior_same,
                 format("recovery reports identical %zu/%zu; learned prior and per-case reports identical: %s", same,
                        recovery.reports.size(), prior_same ? "yes" : "no")});
    }
    return all ? 0 : 1;
}
