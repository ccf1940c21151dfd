#include <doctest.h>

#include <filesystem>
#include <random>
#include <sstream>
#include <fstream>

#include "oracles.hpp"
#include "priorwarp/errors.hpp"
#include "priorwarp/params_io.hpp"
#include "priorwarp/run_config.hpp"

using namespace pw;
using nlohmann::json;
namespace fs = std::filesystem;

TEST_CASE("params round trip through JSON and disk") {
    const ControlGrid grid = ControlGrid::lattice(3, 3, 3, {32, 32, 32});
    std::mt19937_64 rng(71);
    std::uniform_real_distribution<double> u(-2, 2);
    DeformParams p = DeformParams::identity(4, 27);
    for (Coord& t : p.shifts.theta) t = {u(rng), u(rng), u(rng)};
    for (Coord& d : p.disp.delta) d = {u(rng), u(rng), u(rng)};

    const ParamsFile f = params_from_json(params_to_json(p, grid));
    CHECK(f.params.shifts.theta == p.shifts.theta);
    CHECK(f.params.disp.delta == p.disp.delta);
    CHECK(f.nh == 3);

    const fs::path path = fs::temp_directory_path() / "pw_params_test.json";
    write_params(p, grid, path);
    CHECK(read_params(path).params.disp.delta == p.disp.delta);
    fs::remove(path);
}

TEST_CASE("malformed params name the field") {
    const ControlGrid grid = ControlGrid::lattice(2, 2, 2, {8, 8, 8});
    const json good = params_to_json(DeformParams::identity(2, 8), grid);

    json j = good;
    j.erase("theta");
    CHECK_THROWS_WITH_AS(params_from_json(j), doctest::Contains("theta"), FormatError);
    j = good;
    j["delta"].erase(0);
    CHECK_THROWS_WITH_AS(params_from_json(j), doctest::Contains("delta"), FormatError);
    j = good;
    j["theta"][1] = json::array({1.0, 2.0});
    CHECK_THROWS_WITH_AS(params_from_json(j), doctest::Contains("theta"), FormatError);
    j = good;
    j["grid"]["nw"] = -1;
    CHECK_THROWS_WITH_AS(params_from_json(j), doctest::Contains("nw"), FormatError);
    CHECK_THROWS_AS(read_params("/nonexistent/params.json"), FormatError);
}

TEST_CASE("prior files carry a sidecar") {
    std::mt19937_64 rng(72);
    AnatomicalPrior p{oracle::random_volume(2, {4, 5, 6}, -1, 1, rng), 123};
    const fs::path path = fs::temp_directory_path() / "pw_prior_test.pwv";
    write_prior(p, path);
    const json side = json::parse(std::ifstream(path.string() + ".json"));
    CHECK(side["kind"] == "prior_logits");
    CHECK(side["c_cls"] == 2);
    CHECK(side["seed"] == 123);
    const AnatomicalPrior q = read_prior(path);
    CHECK(q.seed == 123);
    REQUIRE(q.logits.data().size() == p.logits.data().size());
    for (std::size_t i = 0; i < p.logits.data().size(); ++i) {
        CHECK(q.logits.data()[i] == static_cast<double>(static_cast<float>(p.logits.data()[i])));
    }
    fs::remove(path);
    fs::remove(path.string() + ".json");
}

TEST_CASE("trail CSV layout") {
    std::vector<TrailEntry> trail(2);
    trail[1].iter = 1;
    trail[1].phase = Phase::prior;
    trail[1].loss.total = 0.25;
    trail[1].lr = 1e-3;
    std::ostringstream os;
    write_trail_csv(trail, os);
    std::istringstream in(os.str());
    std::string header, first, second;
    std::getline(in, header);
    std::getline(in, first);
    std::getline(in, second);
    CHECK(header == "iteration,phase,dice_pred,dice_prior,centroid,reg,total,lr");
    CHECK(first.rfind("0,params,", 0) == 0);
    CHECK(second.rfind("1,prior,", 0) == 0);
}

TEST_CASE("phantom spec JSON round trip") {
    PhantomSpec s = PhantomSpec::default_suite();
    s.seed = 42;
    s.source_slope = 6.0;
    const PhantomSpec r = phantom_spec_from_json(phantom_spec_to_json(s));
    CHECK(r.c_cls == s.c_cls);
    CHECK(r.dims == s.dims);
    CHECK(r.organs.size() == s.organs.size());
    CHECK(r.organs[2].semi_axes_frac == s.organs[2].semi_axes_frac);
    CHECK(r.seed == 42);
    CHECK(r.source_slope == 6.0);
}

TEST_CASE("presets") {
    const FitConfig full = fit_preset("full");
    CHECK(full.lr_params == 3e-4);
    CHECK(full.lr_prior == 1e-3);
    CHECK(full.weight_decay == 1e-5);
    CHECK(full.gamma == 0.5);
    CHECK(full.lambda == 1e-5);
    CHECK(full.param_span == 50);
    CHECK(full.prior_span == 10);
    CHECK(fit_preset("desk").iters <= 2000);
    CHECK_THROWS_AS(fit_preset("fast"), ArgumentError);
}

TEST_CASE("config merging and rejection") {
    RunConfig cfg;
    apply_config(cfg, json::parse(R"({"fit": {"iters": 12, "gamma": 0.0}, "grid": {"nh": 2},
                                      "phantom": {"n_cases": 3, "max_theta": 6.0}, "metrics": {"tau": 2.0}})"));
    CHECK(cfg.fit.iters == 12);
    CHECK(cfg.fit.gamma == 0.0);
    CHECK(cfg.grid_nh == 2);
    CHECK(cfg.n_cases == 3);
    CHECK(cfg.phantom.max_theta == 6.0);
    CHECK(cfg.tau == 2.0);

    CHECK_THROWS_WITH_AS(apply_config(cfg, json::parse(R"({"fit": {"iterations": 5}})")),
                         doctest::Contains("fit.iterations"), ArgumentError);
    CHECK_THROWS_WITH_AS(apply_config(cfg, json::parse(R"({"solver": {}})")), doctest::Contains("solver"),
                         ArgumentError);
    CHECK_THROWS_WITH_AS(apply_config(cfg, json::parse(R"({"fit": {"iters": "many"}})")),
                         doctest::Contains("fit.iters"), ArgumentError);

    RunConfig back;
    apply_config(back, config_to_json(cfg));
    CHECK(config_to_json(back) == config_to_json(cfg));
}
