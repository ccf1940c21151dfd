#include "priorwarp/run_config.hpp"

#include <fstream>
#include <set>

#include "priorwarp/errors.hpp"
#include "priorwarp/params_io.hpp"

namespace pw {
namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& section, const std::set<std::string>& allowed) {
    if (!j.is_object()) throw ArgumentError("config section '" + section + "' must be an object");
    for (const auto& [key, value] : j.items()) {
        if (!allowed.count(key)) {
            throw ArgumentError("unknown config key '" + (section.empty() ? key : section + "." + key) + "'");
        }
    }
}

template <class T>
void take(const json& j, const char* key, const std::string& section, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ArgumentError("config key '" + section + "." + key + "' has the wrong type");
    }
}

} // namespace

FitConfig fit_preset(const std::string& name) {
    FitConfig f;
    if (name == "full") return f;
    if (name == "desk") {
        f.iters = 600;
        f.warmup_iters = 20;
        f.lr_params = 0.05;
        f.lr_prior = 0.3;
        return f;
    }
    throw ArgumentError("unknown preset '" + name + "' (expected full or desk)");
}

void apply_config(RunConfig& cfg, const json& j) {
    check_keys(j, "", {"fit", "grid", "phantom", "metrics"});
    if (j.contains("fit")) {
        const json& f = j["fit"];
        check_keys(f, "fit",
                   {"iters", "warmup_iters", "lr_params", "lr_prior", "weight_decay", "gamma", "lambda", "eps",
                    "param_span", "prior_span", "seed", "threads"});
        take(f, "iters", "fit", cfg.fit.iters);
        take(f, "warmup_iters", "fit", cfg.fit.warmup_iters);
        take(f, "lr_params", "fit", cfg.fit.lr_params);
        take(f, "lr_prior", "fit", cfg.fit.lr_prior);
        take(f, "weight_decay", "fit", cfg.fit.weight_decay);
        take(f, "gamma", "fit", cfg.fit.gamma);
        take(f, "lambda", "fit", cfg.fit.lambda);
        take(f, "eps", "fit", cfg.fit.eps);
        take(f, "param_span", "fit", cfg.fit.param_span);
        take(f, "prior_span", "fit", cfg.fit.prior_span);
        take(f, "seed", "fit", cfg.fit.seed);
        take(f, "threads", "fit", cfg.fit.threads);
    }
    if (j.contains("grid")) {
        const json& g = j["grid"];
        check_keys(g, "grid", {"nh", "nw", "nd"});
        take(g, "nh", "grid", cfg.grid_nh);
        take(g, "nw", "grid", cfg.grid_nw);
        take(g, "nd", "grid", cfg.grid_nd);
    }
    if (j.contains("phantom")) {
        const json& p = j["phantom"];
        check_keys(p, "phantom", {"c_cls", "dims", "organs", "max_theta", "max_delta", "grid_n", "seed", "source_slope", "n_cases"});
        json merged = phantom_spec_to_json(cfg.phantom);
        for (const auto& [key, value] : p.items()) {
            if (key != "n_cases") merged[key] = value;
        }
        try {
            cfg.phantom = phantom_spec_from_json(merged);
        } catch (const FormatError& e) {
            throw ArgumentError(std::string("config section 'phantom': ") + e.what());
        } catch (const json::exception&) {
            throw ArgumentError("config section 'phantom' has an ill-typed value");
        }
        take(p, "n_cases", "phantom", cfg.n_cases);
    }
    if (j.contains("metrics")) {
        const json& m = j["metrics"];
        check_keys(m, "metrics", {"tau", "spacing"});
        take(m, "tau", "metrics", cfg.tau);
        take(m, "spacing", "metrics", cfg.spacing);
    }
    cfg.fit.tau = cfg.tau;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(is);
    } catch (const json::parse_error& e) {
        throw FormatError(path.string() + ": invalid JSON: " + e.what());
    }
    apply_config(base, j);
    return base;
}

json config_to_json(const RunConfig& c) {
    const FitConfig& f = c.fit;
    json phantom = phantom_spec_to_json(c.phantom);
    phantom["n_cases"] = c.n_cases;
    return {{"fit",
             {{"iters", f.iters},
              {"warmup_iters", f.warmup_iters},
              {"lr_params", f.lr_params},
              {"lr_prior", f.lr_prior},
              {"weight_decay", f.weight_decay},
              {"gamma", f.gamma},
              {"lambda", f.lambda},
              {"eps", f.eps},
              {"param_span", f.param_span},
              {"prior_span", f.prior_span},
              {"seed", f.seed},
              {"threads", f.threads}}},
            {"grid", {{"nh", c.grid_nh}, {"nw", c.grid_nw}, {"nd", c.grid_nd}}},
            {"phantom", phantom},
            {"metrics", {{"tau", c.tau}, {"spacing", c.spacing}}}};
}

} // namespace pw
