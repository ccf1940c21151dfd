#pragma once

// Synthetic multi-organ phantoms: disjoint ellipsoids rasterised on a grid,
// warped by known per-class shifts and control displacements through the
// same affine + TPS pipeline the fitter uses.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "priorwarp/deform.hpp"
#include "priorwarp/prior.hpp"
#include "priorwarp/volume.hpp"

namespace pw {

struct Organ {
    Coord center_frac;     // centre at frac * (dim - 1)
    Coord semi_axes_frac;  // semi-axes at frac * dim
};

struct PhantomSpec {
    std::size_t c_cls = 4;
    Dims dims{32, 32, 32};
    std::vector<Organ> organs;  // organ k carries label k + 1
    double max_theta = 2.0;     // per-component bound on class shifts, voxels
    double max_delta = 2.0;     // per-component bound on control displacements, voxels
    std::size_t grid_n = 3;     // control lattice nodes per axis
    std::uint64_t seed = 0;
    // 0 warps the one-hot canonical anatomy; > 0 warps smooth_prior(spec,
    // source_slope) probabilities so sub-voxel shifts survive hardening.
    double source_slope = 0.0;

    static constexpr double kMinMargin = 2.0;         // background voxels between organs
    static constexpr double kMinBorderClearance = 3.0;

    // Four ellipsoids on a 32^3 grid, 3x3x3 control lattice, |theta|,|delta| <= 2.
    static PhantomSpec default_suite();

    ControlGrid control_grid() const { return ControlGrid::lattice(grid_n, grid_n, grid_n, dims); }
};

// Throws ArgumentError when organs overlap, crowd each other or the border.
LabelMap canonical_anatomy(const PhantomSpec& spec);

// Prior logits whose class-c channel is slope * (signed distance inside
// organ c), approximated as min semi-axis * (1 - ellipsoidal radius). The
// 0.5 level set of the probabilities sits on the organ surface, so the
// hardened prior reproduces canonical_anatomy away from grazing voxels.
AnatomicalPrior smooth_prior(const PhantomSpec& spec, double slope);

// Probabilities sample_case warps: one-hot canonical or the smooth prior.
Volume source_probabilities(const PhantomSpec& spec);

struct PhantomCase {
    LabelMap labels;
    DeformParams truth;
    std::uint64_t seed = 0;
};

// Draws theta and delta uniformly within the spec's bounds and warps the
// source anatomy. delta is then corrected (a few minimum-norm steps, clamped
// to the bound) until every target centroid equals the source centroid
// shifted by theta_c, so theta stays the identifiable per-organ translation.
// Throws ArgumentError if a class vanishes.
PhantomCase sample_case(const PhantomSpec& spec, const TpsSystem& sys, std::uint64_t case_seed);

std::uint64_t case_seed(std::uint64_t suite_seed, std::size_t index);

struct PhantomSuite {
    PhantomSpec spec;
    LabelMap canonical;
    std::vector<PhantomCase> cases;
};

PhantomSuite generate_suite(const PhantomSpec& spec, std::size_t n_cases);

// Writes manifest.json, canonical.pwv and case_####.pwv into dir.
void make_suite(const PhantomSpec& spec, std::size_t n_cases, const std::filesystem::path& dir);
void write_suite(const PhantomSuite& suite, const std::filesystem::path& dir);
// Reads the label maps and truth parameters listed in dir/manifest.json.
PhantomSuite load_suite(const std::filesystem::path& dir);

} // namespace pw
