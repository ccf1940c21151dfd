#pragma once

// Experiment configuration read from JSON files and overridden by CLI flags.
//
//   {"fit":     {iters, warmup_iters, lr_params, lr_prior, weight_decay, gamma,
//                lambda, eps, param_span, prior_span, seed, threads},
//    "grid":    {"nh", "nw", "nd"},
//    "phantom": {c_cls, dims, organs, max_theta, max_delta, grid_n, seed, n_cases},
//    "metrics": {"tau", "spacing"}}
//
// Every section and key is optional; unknown keys are rejected by name.

#include <filesystem>
#include <string>

#include <json.hpp>

#include "priorwarp/optimizer.hpp"
#include "priorwarp/phantom.hpp"

namespace pw {

struct RunConfig {
    FitConfig fit;
    std::size_t grid_nh = 3, grid_nw = 3, grid_nd = 3;
    PhantomSpec phantom = PhantomSpec::default_suite();
    std::size_t n_cases = 20;
    double tau = kDefaultNsdTolerance;
    Spacing spacing{1.0, 1.0, 1.0};
};

// "full": the full-schedule hyper-parameters (FitConfig defaults).
// "desk": larger learning rates and a shorter schedule for 32^3 phantoms.
FitConfig fit_preset(const std::string& name);

// Merges j into cfg. Throws ArgumentError naming any unknown or ill-typed key.
void apply_config(RunConfig& cfg, const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});
nlohmann::json config_to_json(const RunConfig& cfg);

} // namespace pw
