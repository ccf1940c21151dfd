#include "priorwarp/params_io.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "priorwarp/errors.hpp"
#include "priorwarp/volume_io.hpp"

namespace pw {
namespace {

using nlohmann::json;

json coord_json(const Coord& c) { return json::array({c.h, c.w, c.d}); }

Coord coord_from(const json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 3) throw FormatError(where + ": expected [h, w, d]");
    Coord c;
    for (std::size_t a = 0; a < 3; ++a) {
        if (!j[a].is_number()) throw FormatError(where + ": expected numbers");
        c[a] = j[a].get<double>();
        if (!std::isfinite(c[a])) throw FormatError(where + ": non-finite value");
    }
    return c;
}

std::vector<Coord> coords_from(const json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_array()) throw FormatError(std::string("'") + key + "' must be an array");
    std::vector<Coord> out;
    for (std::size_t i = 0; i < j[key].size(); ++i) {
        out.push_back(coord_from(j[key][i], std::string(key) + "[" + std::to_string(i) + "]"));
    }
    return out;
}

std::size_t size_field(const json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_number_unsigned()) {
        throw FormatError(std::string("'") + key + "' must be a non-negative integer");
    }
    return j[key].get<std::size_t>();
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json read_json_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open " + path.string());
    try {
        return json::parse(is);
    } catch (const json::parse_error& e) {
        throw FormatError(path.string() + ": invalid JSON: " + e.what());
    }
}

void write_json_file(const json& j, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot write " + path.string());
    os << j.dump(2) << "\n";
}

const char* phase_name(Phase p) { return p == Phase::params ? "params" : "prior"; }

} // namespace

json params_to_json(const DeformParams& params, const ControlGrid& grid) {
    json theta = json::array(), delta = json::array();
    for (const Coord& t : params.shifts.theta) theta.push_back(coord_json(t));
    for (const Coord& d : params.disp.delta) delta.push_back(coord_json(d));
    return {{"theta", theta}, {"delta", delta}, {"grid", {{"nh", grid.nh}, {"nw", grid.nw}, {"nd", grid.nd}}}};
}

ParamsFile params_from_json(const json& j) {
    if (!j.is_object()) throw FormatError("parameter file must be a JSON object");
    ParamsFile f;
    f.params.shifts.theta = coords_from(j, "theta");
    f.params.disp.delta = coords_from(j, "delta");
    if (!j.contains("grid") || !j["grid"].is_object()) throw FormatError("'grid' must be an object");
    f.nh = size_field(j["grid"], "nh");
    f.nw = size_field(j["grid"], "nw");
    f.nd = size_field(j["grid"], "nd");
    if (f.nh * f.nw * f.nd != f.params.disp.size()) {
        throw FormatError("'delta' has " + std::to_string(f.params.disp.size()) + " entries but 'grid' implies " +
                          std::to_string(f.nh * f.nw * f.nd));
    }
    return f;
}

void write_params(const DeformParams& params, const ControlGrid& grid, const std::filesystem::path& path) {
    write_json_file(params_to_json(params, grid), path);
}

ParamsFile read_params(const std::filesystem::path& path) { return params_from_json(read_json_file(path)); }

json phantom_spec_to_json(const PhantomSpec& s) {
    json organs = json::array();
    for (const Organ& o : s.organs) {
        organs.push_back({{"center_frac", coord_json(o.center_frac)}, {"semi_axes_frac", coord_json(o.semi_axes_frac)}});
    }
    return {{"c_cls", s.c_cls},         {"dims", {s.dims.h, s.dims.w, s.dims.d}},
            {"organs", organs},         {"max_theta", s.max_theta},
            {"max_delta", s.max_delta}, {"grid_n", s.grid_n},
            {"seed", s.seed},           {"source_slope", s.source_slope}};
}

PhantomSpec phantom_spec_from_json(const json& j) {
    if (!j.is_object()) throw FormatError("phantom spec must be a JSON object");
    PhantomSpec s;
    s.c_cls = size_field(j, "c_cls");
    if (!j.contains("dims") || !j["dims"].is_array() || j["dims"].size() != 3) throw FormatError("'dims' must be [H, W, D]");
    s.dims = {j["dims"][0].get<std::size_t>(), j["dims"][1].get<std::size_t>(), j["dims"][2].get<std::size_t>()};
    if (!j.contains("organs") || !j["organs"].is_array()) throw FormatError("'organs' must be an array");
    for (const auto& o : j["organs"]) {
        if (!o.is_object() || !o.contains("center_frac") || !o.contains("semi_axes_frac")) {
            throw FormatError("organs need 'center_frac' and 'semi_axes_frac'");
        }
        s.organs.push_back({coord_from(o["center_frac"], "center_frac"), coord_from(o["semi_axes_frac"], "semi_axes_frac")});
    }
    if (!j.contains("max_theta") || !j["max_theta"].is_number()) throw FormatError("'max_theta' must be a number");
    if (!j.contains("max_delta") || !j["max_delta"].is_number()) throw FormatError("'max_delta' must be a number");
    s.max_theta = j["max_theta"].get<double>();
    s.max_delta = j["max_delta"].get<double>();
    s.grid_n = size_field(j, "grid_n");
    s.seed = size_field(j, "seed");
    if (j.contains("source_slope")) {
        if (!j["source_slope"].is_number()) throw FormatError("'source_slope' must be a number");
        s.source_slope = j["source_slope"].get<double>();
    }
    return s;
}

json loss_to_json(const LossBreakdown& b) {
    return {{"dice_pred", b.dice_pred}, {"dice_prior", b.dice_prior}, {"centroid", b.centroid}, {"reg", b.reg},
            {"total", b.total}};
}

json metrics_to_json(const MetricReport& r) {
    json classes = json::array();
    for (const ClassMetrics& c : r.classes) {
        classes.push_back({{"label", c.label},
                           {"dsc", c.dsc},
                           {"hd95", optional_json(c.hd95)},
                           {"nsd", optional_json(c.nsd)},
                           {"empty_a", c.empty_a},
                           {"empty_b", c.empty_b}});
    }
    return {{"classes", classes},
            {"mean_dsc", optional_json(r.mean_dsc)},
            {"mean_hd95", optional_json(r.mean_hd95)},
            {"mean_nsd", optional_json(r.mean_nsd)},
            {"tau", r.tau},
            {"spacing", {r.spacing[0], r.spacing[1], r.spacing[2]}}};
}

json fit_report_to_json(const FitReport& r, const ControlGrid& grid) {
    json trail = json::array();
    for (const TrailEntry& e : r.trail) {
        json row = loss_to_json(e.loss);
        row["iter"] = e.iter;
        row["phase"] = phase_name(e.phase);
        row["lr"] = e.lr;
        trail.push_back(std::move(row));
    }
    return {{"iterations", r.trail.size()},
            {"params", params_to_json(r.params, grid)},
            {"initial_metrics", metrics_to_json(r.initial_metrics)},
            {"final_metrics", metrics_to_json(r.final_metrics)},
            {"trail", trail}};
}

void write_trail_csv(const std::vector<TrailEntry>& trail, std::ostream& os) {
    os << "iteration,phase,dice_pred,dice_prior,centroid,reg,total,lr\n";
    os << std::setprecision(17);
    for (const TrailEntry& e : trail) {
        os << e.iter << ',' << phase_name(e.phase) << ',' << e.loss.dice_pred << ',' << e.loss.dice_prior << ','
           << e.loss.centroid << ',' << e.loss.reg << ',' << e.loss.total << ',' << e.lr << '\n';
    }
}

void write_trail_csv(const std::vector<TrailEntry>& trail, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot write " + path.string());
    write_trail_csv(trail, os);
}

void write_prior(const AnatomicalPrior& prior, const std::filesystem::path& path) {
    write_volume(prior.logits, path);
    write_json_file({{"kind", "prior_logits"}, {"c_cls", prior.classes()}, {"seed", prior.seed}},
                    std::filesystem::path(path.string() + ".json"));
}

AnatomicalPrior read_prior(const std::filesystem::path& path) {
    AnatomicalPrior prior;
    prior.logits = read_real_volume(path);
    const std::filesystem::path sidecar(path.string() + ".json");
    if (std::filesystem::exists(sidecar)) {
        const json j = read_json_file(sidecar);
        if (!j.is_object() || j.value("kind", std::string()) != "prior_logits") {
            throw FormatError(sidecar.string() + ": 'kind' must be \"prior_logits\"");
        }
        if (size_field(j, "c_cls") != prior.classes()) {
            throw FormatError(sidecar.string() + ": 'c_cls' does not match the logits volume");
        }
        prior.seed = j.value("seed", std::uint64_t{0});
    }
    return prior;
}

} // namespace pw
