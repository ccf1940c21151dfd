#include "priorwarp/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <string>

#include "priorwarp/errors.hpp"
#include "priorwarp/losses.hpp"
#include "priorwarp/params_io.hpp"
#include "priorwarp/volume_io.hpp"

namespace pw {

PhantomSpec PhantomSpec::default_suite() {
    PhantomSpec s;
    s.organs = {
        {{0.28, 0.28, 0.50}, {0.165, 0.150, 0.28}},
        {{0.72, 0.28, 0.46}, {0.150, 0.165, 0.24}},
        {{0.28, 0.72, 0.54}, {0.140, 0.160, 0.26}},
        {{0.72, 0.72, 0.50}, {0.165, 0.140, 0.22}},
    };
    return s;
}

LabelMap canonical_anatomy(const PhantomSpec& spec) {
    if (spec.organs.size() > spec.c_cls) throw ArgumentError("phantom has more organs than classes");
    if (spec.organs.size() > 255) throw ArgumentError("phantom supports at most 255 organs");
    const Dims& d = spec.dims;
    LabelMap lm(d);
    for (std::size_t o = 0; o < spec.organs.size(); ++o) {
        const Organ& org = spec.organs[o];
        const Coord c{org.center_frac.h * static_cast<double>(d.h - 1), org.center_frac.w * static_cast<double>(d.w - 1),
                      org.center_frac.d * static_cast<double>(d.d - 1)};
        const Coord a{org.semi_axes_frac.h * static_cast<double>(d.h), org.semi_axes_frac.w * static_cast<double>(d.w),
                      org.semi_axes_frac.d * static_cast<double>(d.d)};
        if (!(a.h > 0.0 && a.w > 0.0 && a.d > 0.0)) throw ArgumentError("organ semi-axes must be positive");
        std::size_t count = 0;
        for (std::size_t i = 0; i < d.h; ++i) {
            for (std::size_t j = 0; j < d.w; ++j) {
                for (std::size_t k = 0; k < d.d; ++k) {
                    const double x = (static_cast<double>(i) - c.h) / a.h;
                    const double y = (static_cast<double>(j) - c.w) / a.w;
                    const double z = (static_cast<double>(k) - c.d) / a.d;
                    if (x * x + y * y + z * z > 1.0) continue;
                    if (lm.at(i, j, k) != 0) {
                        throw ArgumentError("organs " + std::to_string(lm.at(i, j, k)) + " and " + std::to_string(o + 1) +
                                            " overlap");
                    }
                    const double lo = PhantomSpec::kMinBorderClearance;
                    if (static_cast<double>(i) < lo || static_cast<double>(j) < lo || static_cast<double>(k) < lo ||
                        static_cast<double>(i) > static_cast<double>(d.h - 1) - lo ||
                        static_cast<double>(j) > static_cast<double>(d.w - 1) - lo ||
                        static_cast<double>(k) > static_cast<double>(d.d - 1) - lo) {
                        throw ArgumentError("organ " + std::to_string(o + 1) + " is closer than 3 voxels to the border");
                    }
                    lm.at(i, j, k) = static_cast<std::uint8_t>(o + 1);
                    ++count;
                }
            }
        }
        if (count == 0) throw ArgumentError("organ " + std::to_string(o + 1) + " rasterises to no voxels");
    }

    // Margin: at least kMinMargin background voxels between distinct organs,
    // i.e. voxel centres of different organs at distance > kMinMargin + 0.
    std::vector<std::vector<Coord>> members(spec.organs.size());
    for (std::size_t i = 0; i < d.h; ++i) {
        for (std::size_t j = 0; j < d.w; ++j) {
            for (std::size_t k = 0; k < d.d; ++k) {
                const auto l = lm.at(i, j, k);
                if (l) members[l - 1].push_back({static_cast<double>(i), static_cast<double>(j), static_cast<double>(k)});
            }
        }
    }
    const double min_dist = PhantomSpec::kMinMargin + 1.0;
    for (std::size_t a = 0; a < members.size(); ++a) {
        for (std::size_t b = a + 1; b < members.size(); ++b) {
            for (const Coord& p : members[a]) {
                for (const Coord& q : members[b]) {
                    if (std::abs(p.h - q.h) < min_dist && std::abs(p.w - q.w) < min_dist && std::abs(p.d - q.d) < min_dist &&
                        norm(p - q) < min_dist) {
                        throw ArgumentError("organs " + std::to_string(a + 1) + " and " + std::to_string(b + 1) +
                                            " are closer than the 2-voxel margin");
                    }
                }
            }
        }
    }
    return lm;
}

AnatomicalPrior smooth_prior(const PhantomSpec& spec, double slope) {
    if (!(slope > 0.0)) throw ArgumentError("smooth_prior: slope must be > 0");
    if (spec.organs.size() > spec.c_cls) throw ArgumentError("phantom has more organs than classes");
    const Dims& d = spec.dims;
    AnatomicalPrior prior;
    prior.logits = Volume(spec.c_cls, d);
    for (double& x : prior.logits.data()) x = -1e3;
    for (std::size_t o = 0; o < spec.organs.size(); ++o) {
        const Organ& org = spec.organs[o];
        const Coord c{org.center_frac.h * static_cast<double>(d.h - 1), org.center_frac.w * static_cast<double>(d.w - 1),
                      org.center_frac.d * static_cast<double>(d.d - 1)};
        const Coord a{org.semi_axes_frac.h * static_cast<double>(d.h), org.semi_axes_frac.w * static_cast<double>(d.w),
                      org.semi_axes_frac.d * static_cast<double>(d.d)};
        const double a_min = std::min({a.h, a.w, a.d});
        auto ch = prior.logits.channel(o);
        std::size_t v = 0;
        for (std::size_t i = 0; i < d.h; ++i) {
            for (std::size_t j = 0; j < d.w; ++j) {
                for (std::size_t k = 0; k < d.d; ++k, ++v) {
                    const double x = (static_cast<double>(i) - c.h) / a.h;
                    const double y = (static_cast<double>(j) - c.w) / a.w;
                    const double z = (static_cast<double>(k) - c.d) / a.d;
                    ch[v] = slope * a_min * (1.0 - std::sqrt(x * x + y * y + z * z));
                }
            }
        }
    }
    return prior;
}

Volume source_probabilities(const PhantomSpec& spec) {
    if (spec.source_slope > 0.0) return normalize(smooth_prior(spec, spec.source_slope));
    return one_hot(canonical_anatomy(spec), spec.c_cls);
}

std::uint64_t case_seed(std::uint64_t suite_seed, std::size_t index) {
    // splitmix64 of the pair
    std::uint64_t z = suite_seed * 0x9E3779B97F4A7C15ull + (static_cast<std::uint64_t>(index) + 1) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

namespace {

// Mean of every basis function over the voxels carrying `label`.
std::vector<double> mean_basis_row(const LabelMap& labels, std::size_t label, const DisplacementBasis& basis) {
    const std::size_t n = basis.size();
    std::vector<double> row(n, 0.0);
    std::size_t count = 0;
    const auto& l = labels.labels();
    for (std::size_t v = 0; v < l.size(); ++v) {
        if (l[v] != label) continue;
        for (std::size_t q = 0; q < n; ++q) row[q] += basis.weights(q)[v];
        ++count;
    }
    if (count > 0) {
        for (double& x : row) x /= static_cast<double>(count);
    }
    return row;
}

void clamp_to_bound(Displacements& disp, double bound) {
    double worst = 0.0;
    for (const Coord& d : disp.delta) worst = std::max({worst, std::abs(d.h), std::abs(d.w), std::abs(d.d)});
    if (worst > bound) {
        const double s = bound / worst;
        for (Coord& d : disp.delta) d = d * s;
    }
}

// One minimum-norm correction delta += A^T (A A^T)^{-1} r per axis, where
// A[c] is the mean basis over the current target region of class c and r the
// residual between the target centroid and the shifted source centroid.
// Moving the control points by that amount moves each target region's
// centroid by r to first order.
bool neutralise_step(const Volume& source, const LabelMap& labels, const ClassShifts& theta, const DisplacementBasis& basis,
                     Displacements& disp) {
    constexpr double kTol = 1e-3;
    const std::size_t C = source.channels();
    const Centroids target = hard_centroids(labels, C);
    const Centroids shifted = soft_centroids(apply_class_shifts(source, theta));
    std::vector<std::vector<double>> rows;
    std::vector<Coord> resid;
    double worst = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
        if (!target[c] || !shifted[c]) continue;
        const Coord r = *target[c] - *shifted[c];
        worst = std::max({worst, std::abs(r.h), std::abs(r.w), std::abs(r.d)});
        rows.push_back(mean_basis_row(labels, c + 1, basis));
        resid.push_back(r);
    }
    if (rows.empty() || worst < kTol) return false;
    const std::size_t m = rows.size(), n = basis.size();
    std::vector<double> gram(m * m, 0.0);
    for (std::size_t a = 0; a < m; ++a) {
        for (std::size_t b = 0; b < m; ++b) {
            for (std::size_t q = 0; q < n; ++q) gram[a * m + b] += rows[a][q] * rows[b][q];
        }
    }
    const LuFactorization lu(gram, m);
    for (std::size_t ax = 0; ax < 3; ++ax) {
        std::vector<double> r(m);
        for (std::size_t a = 0; a < m; ++a) r[a] = resid[a][ax];
        lu.solve(r);
        for (std::size_t q = 0; q < n; ++q) {
            double s = 0.0;
            for (std::size_t a = 0; a < m; ++a) s += rows[a][q] * r[a];
            disp.delta[q][ax] += s;
        }
    }
    return true;
}

} // namespace

PhantomCase sample_case(const PhantomSpec& spec, const TpsSystem& sys, std::uint64_t seed) {
    if (!(spec.max_theta >= 0.0) || !(spec.max_delta >= 0.0)) throw ArgumentError("phantom warp bounds must be >= 0");
    const std::size_t C = spec.c_cls;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ut(-spec.max_theta, spec.max_theta);
    std::uniform_real_distribution<double> ud(-spec.max_delta, spec.max_delta);

    PhantomCase out;
    out.seed = seed;
    out.truth = DeformParams::identity(C, sys.size());
    for (Coord& t : out.truth.shifts.theta) t = {ut(rng), ut(rng), ut(rng)};
    for (Coord& d : out.truth.disp.delta) d = {ud(rng), ud(rng), ud(rng)};

    const DeformPipeline pipe(sys, spec.dims);
    const Volume source = source_probabilities(spec);
    out.labels = channel_argmax(pipe.forward(source, out.truth).deformed);
    if (spec.max_delta > 0.0) {
        for (int it = 0; it < 8; ++it) {
            if (!neutralise_step(source, out.labels, out.truth.shifts, pipe.basis(), out.truth.disp)) break;
            clamp_to_bound(out.truth.disp, spec.max_delta);
            out.labels = channel_argmax(pipe.forward(source, out.truth).deformed);
        }
    }
    for (std::size_t c = 1; c <= spec.organs.size(); ++c) {
        const auto& l = out.labels.labels();
        if (std::find(l.begin(), l.end(), c) == l.end()) {
            throw ArgumentError("phantom warp removed class " + std::to_string(c) + "; reduce the warp bounds");
        }
    }
    return out;
}

PhantomSuite generate_suite(const PhantomSpec& spec, std::size_t n_cases) {
    PhantomSuite suite;
    suite.spec = spec;
    suite.canonical = canonical_anatomy(spec);
    const TpsSystem sys(spec.control_grid());
    suite.cases.reserve(n_cases);
    for (std::size_t k = 0; k < n_cases; ++k) suite.cases.push_back(sample_case(spec, sys, case_seed(spec.seed, k)));
    return suite;
}

namespace {

std::string case_file(std::size_t k) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "case_%04zu.pwv", k);
    return buf;
}

} // namespace

void write_suite(const PhantomSuite& suite, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_volume(suite.canonical, dir / "canonical.pwv");
    nlohmann::json cases = nlohmann::json::array();
    for (std::size_t k = 0; k < suite.cases.size(); ++k) {
        const PhantomCase& c = suite.cases[k];
        write_volume(c.labels, dir / case_file(k));
        nlohmann::json entry = params_to_json(c.truth, suite.spec.control_grid());
        entry["file"] = case_file(k);
        entry["seed"] = c.seed;
        cases.push_back(std::move(entry));
    }
    const nlohmann::json manifest{{"format", "priorwarp-suite v1"},
                                  {"spec", phantom_spec_to_json(suite.spec)},
                                  {"canonical", "canonical.pwv"},
                                  {"cases", std::move(cases)}};
    std::ofstream os(dir / "manifest.json");
    if (!os) throw FormatError("cannot write " + (dir / "manifest.json").string());
    os << manifest.dump(2) << "\n";
}

void make_suite(const PhantomSpec& spec, std::size_t n_cases, const std::filesystem::path& dir) {
    write_suite(generate_suite(spec, n_cases), dir);
}

PhantomSuite load_suite(const std::filesystem::path& dir) {
    std::ifstream is(dir / "manifest.json");
    if (!is) throw FormatError("missing manifest.json in " + dir.string());
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("manifest.json: invalid JSON: ") + e.what());
    }
    if (!manifest.is_object() || !manifest.contains("spec") || !manifest.contains("cases") || !manifest["cases"].is_array()) {
        throw FormatError("manifest.json: expected 'spec' and 'cases'");
    }
    PhantomSuite suite;
    suite.spec = phantom_spec_from_json(manifest["spec"]);
    suite.canonical = read_label_map(dir / manifest.value("canonical", std::string("canonical.pwv")));
    for (const auto& entry : manifest["cases"]) {
        if (!entry.is_object() || !entry.contains("file") || !entry.contains("seed")) {
            throw FormatError("manifest.json: case entries need 'file' and 'seed'");
        }
        PhantomCase c;
        c.labels = read_label_map(dir / entry["file"].get<std::string>());
        c.seed = entry["seed"].get<std::uint64_t>();
        c.truth = params_from_json(entry).params;
        suite.cases.push_back(std::move(c));
    }
    return suite;
}

} // namespace pw
