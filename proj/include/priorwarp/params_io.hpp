#pragma once

// JSON encodings for deformation parameters, reports and phantom specs.
//
// Parameter files (params v1):
//   {"theta":[[h,w,d], ...C], "delta":[[h,w,d], ...N], "grid":{"nh":..,"nw":..,"nd":..}}

#include <filesystem>
#include <iosfwd>
#include <string_view>

#include <json.hpp>

#include "priorwarp/optimizer.hpp"
#include "priorwarp/phantom.hpp"
#include "priorwarp/prior.hpp"

namespace pw {

inline constexpr std::string_view kParamsFormatVersion = "params v1";

struct ParamsFile {
    DeformParams params;
    std::size_t nh = 0, nw = 0, nd = 0;
};

nlohmann::json params_to_json(const DeformParams& params, const ControlGrid& grid);
// FormatError naming the offending field.
ParamsFile params_from_json(const nlohmann::json& j);
void write_params(const DeformParams& params, const ControlGrid& grid, const std::filesystem::path& path);
ParamsFile read_params(const std::filesystem::path& path);

nlohmann::json phantom_spec_to_json(const PhantomSpec& spec);
PhantomSpec phantom_spec_from_json(const nlohmann::json& j);

nlohmann::json loss_to_json(const LossBreakdown& b);
nlohmann::json metrics_to_json(const MetricReport& r);
// Deterministic content only; wall time is left to the caller.
nlohmann::json fit_report_to_json(const FitReport& r, const ControlGrid& grid);

// iteration,phase,dice_pred,dice_prior,centroid,reg,total,lr
void write_trail_csv(const std::vector<TrailEntry>& trail, std::ostream& os);
void write_trail_csv(const std::vector<TrailEntry>& trail, const std::filesystem::path& path);

// Logits as f32 PWV1 plus a sidecar <path>.json {"kind":"prior_logits","c_cls":K,"seed":S}.
void write_prior(const AnatomicalPrior& prior, const std::filesystem::path& path);
AnatomicalPrior read_prior(const std::filesystem::path& path);

} // namespace pw
