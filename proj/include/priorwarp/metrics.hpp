#pragma once

// Overlap and surface-distance metrics between two label maps.

#include <optional>
#include <vector>

#include "priorwarp/volume.hpp"

namespace pw {

inline constexpr double kDefaultNsdTolerance = 1.0;  // mm

// 2|A n B| / (|A| + |B|) for class c; 1 if both empty, 0 if exactly one is.
double dsc(const LabelMap& a, const LabelMap& b, std::size_t c);

// Class-c voxels with at least one of their 6 face neighbours outside the
// class; out-of-grid neighbours count as background.
std::vector<Coord> surface_voxels(const LabelMap& m, std::size_t c);

// For each point of `from`, the spacing-scaled distance to the nearest point of `to`.
std::vector<double> directed_surface_distances(const std::vector<Coord>& from, const std::vector<Coord>& to,
                                               const Spacing& spacing);

// Nearest-rank 95th percentile: the ceil(0.95 n)-th smallest value.
double percentile95(std::vector<double> values);

// nullopt when class c is empty in either map.
std::optional<double> hd95(const LabelMap& a, const LabelMap& b, std::size_t c, const Spacing& spacing);
std::optional<double> nsd(const LabelMap& a, const LabelMap& b, std::size_t c, double tau, const Spacing& spacing);

struct ClassMetrics {
    std::size_t label = 0;
    double dsc = 0.0;
    std::optional<double> hd95;
    std::optional<double> nsd;
    bool empty_a = false;
    bool empty_b = false;
};

struct MetricReport {
    std::vector<ClassMetrics> classes;
    // Means skip classes empty in both maps; hd95/nsd means also skip classes
    // empty in exactly one. nullopt when nothing qualifies.
    std::optional<double> mean_dsc;
    std::optional<double> mean_hd95;
    std::optional<double> mean_nsd;
    double tau = kDefaultNsdTolerance;
    Spacing spacing{1.0, 1.0, 1.0};
};

// Classes 1..c_cls. Throws ArgumentError on a dims mismatch.
MetricReport evaluate_metrics(const LabelMap& a, const LabelMap& b, std::size_t c_cls, double tau, const Spacing& spacing);

} // namespace pw
