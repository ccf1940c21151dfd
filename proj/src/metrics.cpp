#include "priorwarp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "priorwarp/errors.hpp"

namespace pw {
namespace {

void check_dims(const LabelMap& a, const LabelMap& b) {
    if (!(a.dims() == b.dims())) throw ArgumentError("label maps have different dims");
}

struct SurfacePair {
    std::vector<double> ab, ba;
};

std::optional<SurfacePair> surface_pair(const LabelMap& a, const LabelMap& b, std::size_t c, const Spacing& spacing) {
    check_dims(a, b);
    const auto sa = surface_voxels(a, c);
    const auto sb = surface_voxels(b, c);
    if (sa.empty() || sb.empty()) return std::nullopt;
    return SurfacePair{directed_surface_distances(sa, sb, spacing), directed_surface_distances(sb, sa, spacing)};
}

} // namespace

double dsc(const LabelMap& a, const LabelMap& b, std::size_t c) {
    check_dims(a, b);
    std::size_t na = 0, nb = 0, both = 0;
    for (std::size_t v = 0; v < a.labels().size(); ++v) {
        const bool in_a = a.labels()[v] == c, in_b = b.labels()[v] == c;
        na += in_a;
        nb += in_b;
        both += in_a && in_b;
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

std::vector<Coord> surface_voxels(const LabelMap& m, std::size_t c) {
    const Dims& d = m.dims();
    std::vector<Coord> out;
    auto is_class = [&](long i, long j, long k) {
        if (i < 0 || j < 0 || k < 0 || i >= static_cast<long>(d.h) || j >= static_cast<long>(d.w) ||
            k >= static_cast<long>(d.d)) {
            return false;
        }
        return m.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j), static_cast<std::size_t>(k)) == c;
    };
    for (long i = 0; i < static_cast<long>(d.h); ++i) {
        for (long j = 0; j < static_cast<long>(d.w); ++j) {
            for (long k = 0; k < static_cast<long>(d.d); ++k) {
                if (!is_class(i, j, k)) continue;
                if (!is_class(i - 1, j, k) || !is_class(i + 1, j, k) || !is_class(i, j - 1, k) ||
                    !is_class(i, j + 1, k) || !is_class(i, j, k - 1) || !is_class(i, j, k + 1)) {
                    out.push_back({static_cast<double>(i), static_cast<double>(j), static_cast<double>(k)});
                }
            }
        }
    }
    return out;
}

std::vector<double> directed_surface_distances(const std::vector<Coord>& from, const std::vector<Coord>& to,
                                               const Spacing& spacing) {
    std::vector<double> out(from.size(), std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < from.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (const Coord& q : to) {
            const double dh = (from[i].h - q.h) * spacing[0];
            const double dw = (from[i].w - q.w) * spacing[1];
            const double dd = (from[i].d - q.d) * spacing[2];
            best = std::min(best, dh * dh + dw * dw + dd * dd);
        }
        out[i] = std::sqrt(best);
    }
    return out;
}

double percentile95(std::vector<double> values) {
    if (values.empty()) throw ArgumentError("percentile of an empty list");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    const std::size_t rank = (95 * n + 99) / 100;  // ceil(0.95 n), 1-based
    return values[rank - 1];
}

std::optional<double> hd95(const LabelMap& a, const LabelMap& b, std::size_t c, const Spacing& spacing) {
    const auto pair = surface_pair(a, b, c, spacing);
    if (!pair) return std::nullopt;
    return std::max(percentile95(pair->ab), percentile95(pair->ba));
}

std::optional<double> nsd(const LabelMap& a, const LabelMap& b, std::size_t c, double tau, const Spacing& spacing) {
    const auto pair = surface_pair(a, b, c, spacing);
    if (!pair) return std::nullopt;
    const auto within = [tau](const std::vector<double>& v) {
        return static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [tau](double x) { return x <= tau; }));
    };
    return static_cast<double>(within(pair->ab) + within(pair->ba)) /
           static_cast<double>(pair->ab.size() + pair->ba.size());
}

MetricReport evaluate_metrics(const LabelMap& a, const LabelMap& b, std::size_t c_cls, double tau, const Spacing& spacing) {
    check_dims(a, b);
    if (!(tau >= 0.0)) throw ArgumentError("NSD tolerance must be >= 0");
    MetricReport r;
    r.tau = tau;
    r.spacing = spacing;
    double sum_dsc = 0.0, sum_hd = 0.0, sum_nsd = 0.0;
    std::size_t n_dsc = 0, n_surf = 0;
    for (std::size_t c = 1; c <= c_cls; ++c) {
        ClassMetrics m;
        m.label = c;
        m.empty_a = std::find(a.labels().begin(), a.labels().end(), c) == a.labels().end();
        m.empty_b = std::find(b.labels().begin(), b.labels().end(), c) == b.labels().end();
        m.dsc = dsc(a, b, c);
        if (const auto pair = surface_pair(a, b, c, spacing)) {
            m.hd95 = std::max(percentile95(pair->ab), percentile95(pair->ba));
            std::size_t within = 0;
            for (double x : pair->ab) within += x <= tau;
            for (double x : pair->ba) within += x <= tau;
            m.nsd = static_cast<double>(within) / static_cast<double>(pair->ab.size() + pair->ba.size());
            sum_hd += *m.hd95;
            sum_nsd += *m.nsd;
            ++n_surf;
        }
        if (!(m.empty_a && m.empty_b)) {
            sum_dsc += m.dsc;
            ++n_dsc;
        }
        r.classes.push_back(m);
    }
    if (n_dsc > 0) r.mean_dsc = sum_dsc / static_cast<double>(n_dsc);
    if (n_surf > 0) {
        r.mean_hd95 = sum_hd / static_cast<double>(n_surf);
        r.mean_nsd = sum_nsd / static_cast<double>(n_surf);
    }
    return r;
}

} // namespace pw
