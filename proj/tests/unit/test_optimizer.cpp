#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "priorwarp/errors.hpp"
#include "priorwarp/optimizer.hpp"
#include "priorwarp/phantom.hpp"
#include "priorwarp/run_config.hpp"

using namespace pw;

namespace {

PhantomSpec small_spec() {
    PhantomSpec s;
    s.c_cls = 2;
    s.dims = {16, 16, 16};
    s.organs = {{{0.3, 0.35, 0.5}, {0.16, 0.16, 0.2}}, {{0.7, 0.65, 0.5}, {0.16, 0.14, 0.22}}};
    s.max_theta = 1.5;
    s.max_delta = 1.0;
    s.source_slope = 6.0;
    return s;
}

FitConfig quick(std::size_t iters) {
    FitConfig f = fit_preset("desk");
    f.iters = iters;
    return f;
}

} // namespace

TEST_CASE("AdamW trivial updates") {
    std::vector<double> p{1.0, -2.0, 3.0};
    AdamW opt(3, AdamWHyper{0.9, 0.999, 1e-8, 0.0});
    opt.step(p, std::vector<double>{0, 0, 0}, 0.1);
    CHECK(p == std::vector<double>{1.0, -2.0, 3.0});

    AdamW first(3, AdamWHyper{0.9, 0.999, 1e-8, 0.0});
    std::vector<double> q{0.0, 0.0, 0.0};
    first.step(q, std::vector<double>{2.5, -1e-3, 40.0}, 0.01);
    CHECK(q[0] == doctest::Approx(-0.01).epsilon(1e-6));
    CHECK(q[1] == doctest::Approx(0.01).epsilon(1e-4));
    CHECK(q[2] == doctest::Approx(-0.01).epsilon(1e-6));
    CHECK(first.steps() == 1);
}

TEST_CASE("AdamW matches the update-equation oracle on a quadratic") {
    const AdamWHyper h{0.9, 0.999, 1e-8, 1e-2};
    AdamW opt(2, h);
    oracle::AdamW ref;
    ref.wd = h.weight_decay;
    std::vector<double> p{3.0, -1.5}, r = p;
    for (int t = 0; t < 5; ++t) {
        const std::vector<double> g{2.0 * (p[0] - 1.0), 2.0 * (p[1] + 0.5)};
        const std::vector<double> gr{2.0 * (r[0] - 1.0), 2.0 * (r[1] + 0.5)};
        opt.step(p, g, 0.05);
        ref.step(r, gr, 0.05);
        CHECK(std::abs(p[0] - r[0]) < 1e-12);
        CHECK(std::abs(p[1] - r[1]) < 1e-12);
    }
}

TEST_CASE("AdamW rejects bad input") {
    AdamW opt(2, AdamWHyper{});
    std::vector<double> p{0, 0};
    CHECK_THROWS_AS(opt.step(p, std::vector<double>{1.0}, 0.1), ArgumentError);
    CHECK_THROWS_AS(opt.step(p, std::vector<double>{1.0, std::nan("")}, 0.1), NumericError);
}

TEST_CASE("lr_at warmup and cosine") {
    CHECK(lr_at(1e-3, 10, 110, 0) == 0.0);
    CHECK(lr_at(1e-3, 10, 110, 5) == doctest::Approx(5e-4));
    CHECK(lr_at(1e-3, 10, 110, 10) == doctest::Approx(1e-3).epsilon(1e-15));
    CHECK(lr_at(1e-3, 10, 110, 60) == doctest::Approx(5e-4).epsilon(1e-12));
    CHECK(lr_at(1e-3, 10, 110, 35) == doctest::Approx(1e-3 * 0.5 * (1 + std::cos(std::numbers::pi * 0.25))));
    CHECK(lr_at(1e-3, 10, 110, 110) == 0.0);
    for (std::size_t t = 11; t < 110; ++t) CHECK(lr_at(1e-3, 10, 110, t) <= lr_at(1e-3, 10, 110, t - 1));
}

TEST_CASE("FitConfig validation names the field") {
    FitConfig f;
    f.param_span = 0;
    CHECK_THROWS_WITH_AS(f.validate(), doctest::Contains("param_span"), ArgumentError);
    f = FitConfig{};
    f.lr_prior = 0.0;
    CHECK_THROWS_WITH_AS(f.validate(), doctest::Contains("lr_prior"), ArgumentError);
}

TEST_CASE("fit_case with zero iterations reports the baseline") {
    const PhantomSpec spec = small_spec();
    const TpsSystem sys(spec.control_grid());
    const PhantomCase pc = sample_case(spec, sys, 3);
    const AnatomicalPrior prior = smooth_prior(spec, 6.0);
    const FitReport r = fit_case(pc.labels, prior.logits, sys, quick(0));
    CHECK(r.trail.empty());
    for (const Coord& t : r.params.shifts.theta) CHECK(t == Coord{});
    for (const Coord& d : r.params.disp.delta) CHECK(d == Coord{});
    CHECK(mean_dice(r.initial_metrics) == mean_dice(r.final_metrics));
    CHECK(mean_dice(r.initial_metrics) > 0.0);
}

TEST_CASE("fit_case improves a warped phantom and is deterministic") {
    const PhantomSpec spec = small_spec();
    const TpsSystem sys(spec.control_grid());
    const PhantomCase pc = sample_case(spec, sys, 5);
    const AnatomicalPrior prior = smooth_prior(spec, 6.0);
    const FitReport a = fit_case(pc.labels, prior.logits, sys, quick(120));
    const FitReport b = fit_case(pc.labels, prior.logits, sys, quick(120));
    CHECK(a.trail.size() == 120);
    CHECK(mean_dice(a.final_metrics) > mean_dice(a.initial_metrics));
    CHECK(a.trail.back().loss.total < a.trail.front().loss.total);
    for (std::size_t i = 0; i < a.trail.size(); ++i) CHECK(a.trail[i].loss.total == b.trail[i].loss.total);
    CHECK(a.deformed.data() == b.deformed.data());
    for (std::size_t c = 0; c < 2; ++c) CHECK(a.params.shifts.theta[c] == b.params.shifts.theta[c]);
}

TEST_CASE("fit_case starting from the truth keeps a high Dice") {
    const PhantomSpec spec = small_spec();
    const TpsSystem sys(spec.control_grid());
    const PhantomCase pc = sample_case(spec, sys, 7);
    const AnatomicalPrior prior = smooth_prior(spec, 6.0);
    const FitReport r = fit_case(pc.labels, prior.logits, sys, quick(0), pc.truth);
    CHECK(mean_dice(r.initial_metrics) > 0.9);
    CHECK_THROWS_AS(fit_case(pc.labels, prior.logits, sys, quick(0), DeformParams::identity(3, 27)), ArgumentError);
}

TEST_CASE("learn_prior alternates spans exactly") {
    const PhantomSpec spec = small_spec();
    const TpsSystem sys(spec.control_grid());
    std::vector<LabelMap> cases;
    for (std::uint64_t s = 0; s < 2; ++s) cases.push_back(sample_case(spec, sys, s).labels);
    FitConfig f = quick(23);
    f.param_span = 5;
    f.prior_span = 2;
    f.warmup_iters = 2;
    const LearnResult r = learn_prior(cases, init_prior(2, spec.dims, 1), sys, f);
    REQUIRE(r.trail.size() == 23);
    std::size_t params = 0, prior = 0;
    for (std::size_t t = 0; t < r.trail.size(); ++t) {
        const bool expect_params = t % 7 < 5;
        CHECK((r.trail[t].phase == Phase::params) == expect_params);
        (r.trail[t].phase == Phase::params ? params : prior)++;
    }
    CHECK(params == 5 * 3 + 2);
    CHECK(prior == 2 * 3);
    REQUIRE(r.cases.size() == 2);
    CHECK(r.cases[0].trail.size() == params);

    const LearnResult again = learn_prior(cases, init_prior(2, spec.dims, 1), sys, f);
    CHECK(again.prior.logits.data() == r.prior.logits.data());
    CHECK_THROWS_AS(learn_prior({}, init_prior(2, spec.dims, 1), sys, f), ArgumentError);
}

TEST_CASE("threaded learn_prior matches the serial run") {
    const PhantomSpec spec = small_spec();
    const TpsSystem sys(spec.control_grid());
    std::vector<LabelMap> cases;
    for (std::uint64_t s = 0; s < 3; ++s) cases.push_back(sample_case(spec, sys, s).labels);
    FitConfig f = quick(14);
    f.param_span = 5;
    f.prior_span = 2;
    const LearnResult serial = learn_prior(cases, init_prior(2, spec.dims, 2), sys, f);
    f.threads = 3;
    const LearnResult threaded = learn_prior(cases, init_prior(2, spec.dims, 2), sys, f);
    CHECK(serial.prior.logits.data() == threaded.prior.logits.data());
}
