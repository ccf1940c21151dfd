// priorwarp command-line front end.

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "priorwarp/errors.hpp"
#include "priorwarp/metrics.hpp"
#include "priorwarp/optimizer.hpp"
#include "priorwarp/params_io.hpp"
#include "priorwarp/phantom.hpp"
#include "priorwarp/prior.hpp"
#include "priorwarp/run_config.hpp"
#include "priorwarp/simd/kernels.hpp"
#include "priorwarp/volume_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pw;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitFormat = 2;
constexpr int kExitNumeric = 3;

struct Globals {
    std::string preset;
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    std::optional<std::size_t> iters;
    std::optional<double> tau;
    std::vector<double> spacing;
    std::string simd = "auto";
};

RunConfig resolve(const Globals& g) {
    RunConfig cfg;
    if (!g.preset.empty()) cfg.fit = fit_preset(g.preset);
    if (!g.config_path.empty()) cfg = load_config(g.config_path, cfg);
    if (g.seed) {
        cfg.fit.seed = *g.seed;
        cfg.phantom.seed = *g.seed;
    }
    if (g.threads) cfg.fit.threads = *g.threads;
    if (g.iters) cfg.fit.iters = *g.iters;
    if (g.tau) cfg.tau = *g.tau;
    if (!g.spacing.empty()) cfg.spacing = {g.spacing[0], g.spacing[1], g.spacing[2]};
    cfg.fit.tau = cfg.tau;
    cfg.fit.validate();
    return cfg;
}

void select_simd(const std::string& name) {
    if (name == "auto") return;
    const simd::Isa isa = name == "avx2" ? simd::Isa::avx2 : simd::Isa::scalar;
    if (!simd::isa_supported(isa)) throw ArgumentError("SIMD level '" + name + "' is not available on this machine");
    simd::set_active_isa(isa);
}

std::string fmt(const std::optional<double>& v, int prec = 4) {
    if (!v) return "-";
    std::ostringstream os;
    os << std::fixed << std::setprecision(prec) << *v;
    return os.str();
}

void print_metric_table(const MetricReport& r, std::ostream& os) {
    os << std::left << std::setw(7) << "class" << std::right << std::setw(10) << "DSC" << std::setw(10) << "HD95"
       << std::setw(10) << "NSD" << '\n';
    for (const ClassMetrics& c : r.classes) {
        std::string note;
        if (c.empty_a && c.empty_b) note = "  (empty in both)";
        else if (c.empty_a || c.empty_b) note = "  (empty in one)";
        os << std::left << std::setw(7) << c.label << std::right << std::setw(10) << fmt(c.dsc) << std::setw(10)
           << fmt(c.hd95) << std::setw(10) << fmt(c.nsd) << note << '\n';
    }
    os << std::left << std::setw(7) << "mean" << std::right << std::setw(10) << fmt(r.mean_dsc) << std::setw(10)
       << fmt(r.mean_hd95) << std::setw(10) << fmt(r.mean_nsd) << '\n';
    os << "NSD tolerance tau = " << r.tau << " mm (set with --tau); spacing " << r.spacing[0] << " x " << r.spacing[1]
       << " x " << r.spacing[2] << " mm\n";
}

void emit(const json& j) { std::cout << j.dump(2) << std::endl; }

// A u8 label map becomes a confident prior; an f32 volume is taken as logits.
AnatomicalPrior load_prior_any(const fs::path& path, std::size_t c_cls_hint) {
    if (fs::exists(path.string() + ".json")) return read_prior(path);
    AnyVolume v = read_volume(path);
    if (auto* lm = std::get_if<LabelMap>(&v)) {
        const std::size_t c = std::max<std::size_t>(lm->max_label(), c_cls_hint);
        return prior_from_labels(*lm, c);
    }
    return AnatomicalPrior{std::get<Volume>(std::move(v)), 0};
}

ControlGrid grid_for(const RunConfig& cfg, const Dims& dims) {
    return ControlGrid::lattice(cfg.grid_nh, cfg.grid_nw, cfg.grid_nd, dims);
}

int cmd_phantom(const RunConfig& cfg, const fs::path& out, std::optional<std::size_t> n_cases) {
    const std::size_t n = n_cases.value_or(cfg.n_cases);
    make_suite(cfg.phantom, n, out);
    const PhantomSuite suite = load_suite(out);
    std::cerr << "wrote " << n << " cases to " << out.string() << '\n';
    std::cerr << std::left << std::setw(8) << "case" << std::setw(22) << "seed" << "max |theta|\n";
    for (std::size_t i = 0; i < suite.cases.size(); ++i) {
        double mt = 0.0;
        for (const Coord& t : suite.cases[i].truth.shifts.theta) mt = std::max({mt, std::abs(t.h), std::abs(t.w), std::abs(t.d)});
        std::cerr << std::left << std::setw(8) << i << std::setw(22) << suite.cases[i].seed << std::fixed
                  << std::setprecision(3) << mt << '\n';
    }
    emit({{"dir", out.string()}, {"cases", n}, {"spec", phantom_spec_to_json(cfg.phantom)}});
    return 0;
}

struct FitArgs {
    std::string target, prior, init_params, out_params, out_deformed, report, trail;
    bool random_init = false;
    std::size_t classes = 0;
};

int cmd_fit(const RunConfig& cfg, const FitArgs& a) {
    const LabelMap target = read_label_map(a.target);
    const std::size_t c_hint = a.classes ? a.classes : target.max_label();
    AnatomicalPrior prior;
    if (a.random_init) {
        if (c_hint == 0) throw ArgumentError("--init needs --classes when the target is empty");
        prior = init_prior(c_hint, target.dims(), cfg.fit.seed);
    } else {
        prior = load_prior_any(a.prior, c_hint);
    }
    const ControlGrid grid = grid_for(cfg, target.dims());
    const TpsSystem sys(grid);
    DeformParams init = DeformParams::identity(prior.classes(), sys.size());
    if (!a.init_params.empty()) init = read_params(a.init_params).params;
    const FitReport r = fit_case(target, prior.logits, sys, cfg.fit, init);

    json body = fit_report_to_json(r, grid);
    if (!a.out_params.empty()) write_params(r.params, grid, a.out_params);
    if (!a.out_deformed.empty()) write_volume(r.deformed, fs::path(a.out_deformed));
    if (!a.trail.empty()) write_trail_csv(r.trail, fs::path(a.trail));
    if (!a.report.empty()) {
        std::ofstream os(a.report);
        if (!os) throw FormatError("cannot write " + a.report);
        os << body.dump(2) << '\n';
    }
    std::cerr << "iteration 0 (identity):\n";
    print_metric_table(r.initial_metrics, std::cerr);
    std::cerr << "after " << r.trail.size() << " iterations:\n";
    print_metric_table(r.final_metrics, std::cerr);
    body["timing"] = {{"wall_seconds", r.wall_seconds}};
    emit(body);
    return 0;
}

struct LearnArgs {
    std::string dataset, out, reports;
    std::string init;
};

int cmd_learn(const RunConfig& cfg, const LearnArgs& a) {
    const PhantomSuite suite = load_suite(a.dataset);
    if (suite.cases.empty()) throw FormatError(a.dataset + ": manifest lists no cases");
    std::vector<LabelMap> cases;
    for (const PhantomCase& c : suite.cases) cases.push_back(c.labels);
    const Dims dims = cases.front().dims();
    const AnatomicalPrior init =
        a.init.empty() ? init_prior(suite.spec.c_cls, dims, cfg.fit.seed) : load_prior_any(a.init, suite.spec.c_cls);
    const ControlGrid grid = grid_for(cfg, dims);
    const TpsSystem sys(grid);
    const LearnResult r = learn_prior(cases, init, sys, cfg.fit);
    write_prior(r.prior, a.out);

    json per_case = json::array();
    for (std::size_t k = 0; k < r.cases.size(); ++k) {
        json rep = fit_report_to_json(r.cases[k], grid);
        if (!a.reports.empty()) {
            fs::create_directories(a.reports);
            char name[32];
            std::snprintf(name, sizeof name, "case_%04zu.json", k);
            std::ofstream os(fs::path(a.reports) / name);
            if (!os) throw FormatError("cannot write reports into " + a.reports);
            os << rep.dump(2) << '\n';
        }
        rep.erase("trail");
        per_case.push_back(std::move(rep));
    }
    std::cerr << std::left << std::setw(8) << "case" << std::right << std::setw(12) << "initial" << std::setw(12)
              << "final" << '\n';
    for (std::size_t k = 0; k < r.cases.size(); ++k) {
        std::cerr << std::left << std::setw(8) << k << std::right << std::fixed << std::setprecision(4) << std::setw(12)
                  << mean_dice(r.cases[k].initial_metrics) << std::setw(12) << mean_dice(r.cases[k].final_metrics)
                  << '\n';
    }
    std::cerr << "mean Dice " << r.initial_mean_dice << " -> " << r.final_mean_dice << '\n';
    emit({{"prior", a.out},
          {"iterations", r.trail.size()},
          {"initial_mean_dice", r.initial_mean_dice},
          {"final_mean_dice", r.final_mean_dice},
          {"cases", per_case},
          {"timing", {{"wall_seconds", r.wall_seconds}}}});
    return 0;
}

int cmd_warp(const fs::path& in, const fs::path& params_path, const fs::path& out) {
    AnyVolume v = read_volume(in);
    const ParamsFile pf = read_params(params_path);
    if (pf.nh == 0) throw FormatError(params_path.string() + ": 'grid' must describe a lattice");
    const Dims dims = std::visit([](const auto& x) { return x.dims(); }, v);
    const TpsSystem sys(ControlGrid::lattice(pf.nh, pf.nw, pf.nd, dims));
    const DeformPipeline pipe(sys, dims);
    if (auto* lm = std::get_if<LabelMap>(&v)) {
        const std::size_t c = std::max<std::size_t>(lm->max_label(), pf.params.shifts.size());
        if (pf.params.shifts.size() != c) {
            throw ArgumentError("parameter file has " + std::to_string(pf.params.shifts.size()) +
                                " shifts but the label map needs " + std::to_string(c));
        }
        LabelMap warped = channel_argmax(pipe.forward(one_hot(*lm, c), pf.params).deformed);
        warped.set_spacing(lm->spacing());
        write_volume(warped, out);
    } else {
        const Volume& vol = std::get<Volume>(v);
        Volume warped = pipe.forward(vol, pf.params).deformed;
        warped.set_spacing(vol.spacing());
        write_volume(warped, out);
    }
    std::cerr << "warped " << in.string() << " -> " << out.string() << '\n';
    emit({{"input", in.string()}, {"params", params_path.string()}, {"output", out.string()}});
    return 0;
}

// Spacing comes from --spacing, then a non-default config value, then the files.
int cmd_eval(const RunConfig& cfg, bool spacing_flag, const fs::path& a_path, const fs::path& b_path,
             std::size_t classes) {
    const LabelMap a = read_label_map(a_path);
    const LabelMap b = read_label_map(b_path);
    const std::size_t c = classes ? classes : std::max(a.max_label(), b.max_label());
    Spacing spacing = cfg.spacing;
    if (!spacing_flag && spacing == Spacing{1.0, 1.0, 1.0}) {
        if (a.spacing() != b.spacing()) throw ArgumentError("label maps disagree on spacing; pass --spacing");
        spacing = a.spacing();
    }
    const MetricReport r = evaluate_metrics(a, b, c, cfg.tau, spacing);
    print_metric_table(r, std::cerr);
    emit(metrics_to_json(r));
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"priorwarp: deformable anatomical priors on 3D label volumes"};
    app.require_subcommand(0, 1);
    Globals g;
    bool show_config = false, version = false;
    app.add_flag("--version", version, "Print the file format versions");
    app.add_flag("--show-config", show_config, "Print the resolved configuration and exit");
    app.add_option("--preset", g.preset, "Hyper-parameter preset")->check(CLI::IsMember({"full", "desk"}));
    app.add_option("--config", g.config_path, "JSON configuration file")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Random seed (phantom draws, prior initialisation)");
    app.add_option("--threads", g.threads, "Worker threads; 1 gives bit-exact baselines")->check(CLI::PositiveNumber);
    app.add_option("--iters", g.iters, "Optimisation iterations");
    app.add_option("--tau", g.tau, "NSD tolerance in mm")->check(CLI::NonNegativeNumber);
    app.add_option("--spacing", g.spacing, "Voxel spacing in mm (h w d)")->expected(3);
    app.add_option("--simd", g.simd, "Kernel set")->check(CLI::IsMember({"auto", "scalar", "avx2"}));

    auto* phantom = app.add_subcommand("phantom", "Generate a synthetic phantom suite");
    std::string ph_out;
    std::optional<std::size_t> ph_cases;
    std::optional<double> ph_theta, ph_delta, ph_slope;
    phantom->add_option("--out", ph_out, "Output directory")->required();
    phantom->add_option("--cases", ph_cases, "Number of cases");
    phantom->add_option("--max-theta", ph_theta, "Bound on class shifts (voxels)");
    phantom->add_option("--max-delta", ph_delta, "Bound on control displacements (voxels)");
    phantom->add_option("--source-slope", ph_slope, "Warp a smooth source of this slope instead of the one-hot anatomy");

    auto* fit = app.add_subcommand("fit", "Fit per-class shifts and TPS displacements to a target");
    FitArgs fa;
    fit->add_option("target", fa.target, "Target label map (PWV1 u8)")->required();
    auto* prior_opt = fit->add_option("--prior", fa.prior, "Prior logits (PWV1 f32) or a label map");
    auto* init_flag = fit->add_flag("--init", fa.random_init, "Start from a seeded random prior");
    prior_opt->excludes(init_flag);
    fit->add_option("--classes", fa.classes, "Number of organ classes (default: largest label)");
    fit->add_option("--init-params", fa.init_params, "Start from these parameters instead of the identity");
    fit->add_option("--out-params", fa.out_params, "Write the fitted parameters here");
    fit->add_option("--out-deformed", fa.out_deformed, "Write the deformed prior probabilities here");
    fit->add_option("--report", fa.report, "Write the fit report JSON here");
    fit->add_option("--trail", fa.trail, "Write the per-iteration loss trail CSV here");

    auto* learn = app.add_subcommand("learn-prior", "Learn a prior over a phantom suite");
    LearnArgs la;
    learn->add_option("dataset", la.dataset, "Suite directory with manifest.json")->required();
    learn->add_option("--out", la.out, "Learned prior (PWV1 f32 + sidecar)")->required();
    learn->add_option("--init", la.init, "Initial prior instead of seeded noise");
    learn->add_option("--reports", la.reports, "Directory for per-case fit reports");

    auto* warp = app.add_subcommand("warp", "Apply shifts and TPS displacements to a volume");
    std::string w_in, w_params, w_out;
    warp->add_option("volume", w_in, "Input volume (PWV1)")->required();
    warp->add_option("params", w_params, "Parameter file (params v1)")->required();
    warp->add_option("--out", w_out, "Output volume")->required();

    auto* eval = app.add_subcommand("eval", "Compare two label maps");
    std::string e_a, e_b;
    std::size_t e_classes = 0;
    eval->add_option("a", e_a, "First label map")->required();
    eval->add_option("b", e_b, "Second label map")->required();
    eval->add_option("--classes", e_classes, "Number of classes (default: largest label)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    }

    try {
        if (version) {
            emit({{"volume_format", std::string(kVolumeFormatVersion)}, {"params_format", std::string(kParamsFormatVersion)}});
            return 0;
        }
        select_simd(g.simd);
        RunConfig cfg = resolve(g);
        if (ph_theta) cfg.phantom.max_theta = *ph_theta;
        if (ph_delta) cfg.phantom.max_delta = *ph_delta;
        if (ph_slope) cfg.phantom.source_slope = *ph_slope;
        if (show_config) {
            emit(config_to_json(cfg));
            return 0;
        }
        if (*phantom) return cmd_phantom(cfg, ph_out, ph_cases);
        if (*fit) {
            if (fa.prior.empty() && !fa.random_init) throw ArgumentError("fit needs --prior or --init");
            return cmd_fit(cfg, fa);
        }
        if (*learn) return cmd_learn(cfg, la);
        if (*warp) return cmd_warp(w_in, w_params, w_out);
        if (*eval) return cmd_eval(cfg, !g.spacing.empty(), e_a, e_b, e_classes);
        std::cerr << app.help();
        return kExitUsage;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << '\n';
        return kExitFormat;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const ArgumentError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFormat;
    }
}
