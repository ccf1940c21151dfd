#include "priorwarp/tps.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "priorwarp/errors.hpp"
#include "priorwarp/simd/kernels.hpp"

namespace pw {

double kernel_u(double r) {
    if (r < 0.0 || std::isnan(r)) throw ArgumentError("kernel_u: radius must be >= 0");
    return kernel_u_sq(r * r);
}

namespace {

double dist_sq(const Coord& a, const Coord& b) {
    const double dh = a.h - b.h, dw = a.w - b.w, dd = a.d - b.d;
    return dh * dh + dw * dw + dd * dd;
}

double axis_node(std::size_t k, std::size_t n, std::size_t extent) {
    return static_cast<double>(k) * static_cast<double>(extent - 1) / static_cast<double>(n - 1);
}

std::vector<double> assemble(const ControlGrid& grid) {
    const std::size_t n = grid.size();
    const std::size_t m = n + 4;
    std::vector<double> a(m * m, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const Coord& pi = grid.points[i];
        for (std::size_t j = i + 1; j < n; ++j) {
            const double u = kernel_u_sq(dist_sq(pi, grid.points[j]));
            a[i * m + j] = u;
            a[j * m + i] = u;
        }
        const double prow[4] = {1.0, pi.h, pi.w, pi.d};
        for (std::size_t k = 0; k < 4; ++k) {
            a[i * m + n + k] = prow[k];
            a[(n + k) * m + i] = prow[k];
        }
    }
    return a;
}

std::string fmt(double x) {
    std::ostringstream os;
    os.precision(3);
    os << std::scientific << x;
    return os.str();
}

} // namespace

ControlGrid ControlGrid::lattice(std::size_t nh, std::size_t nw, std::size_t nd, const Dims& extent) {
    if (nh < 2 || nw < 2 || nd < 2) throw ArgumentError("control lattice needs at least 2 nodes per axis");
    if (extent.h < 2 || extent.w < 2 || extent.d < 2) throw ArgumentError("control lattice extent must be >= 2 voxels per axis");
    ControlGrid g;
    g.nh = nh;
    g.nw = nw;
    g.nd = nd;
    g.points.reserve(nh * nw * nd);
    for (std::size_t i = 0; i < nh; ++i) {
        for (std::size_t j = 0; j < nw; ++j) {
            for (std::size_t k = 0; k < nd; ++k) {
                g.points.push_back({axis_node(i, nh, extent.h), axis_node(j, nw, extent.w), axis_node(k, nd, extent.d)});
            }
        }
    }
    return g;
}

ControlGrid ControlGrid::from_points(std::vector<Coord> points) {
    if (points.size() < 5) throw ArgumentError("thin-plate spline needs at least 5 control points");
    ControlGrid g;
    g.points = std::move(points);
    return g;
}

LuFactorization::LuFactorization(std::vector<double> a, std::size_t n, double rel_pivot_tol)
    : n_(n), lu_(std::move(a)), perm_(n) {
    if (lu_.size() != n * n) throw ArgumentError("LU: matrix size mismatch");
    double scale = 0.0;
    for (double x : lu_) scale = std::max(scale, std::abs(x));
    const double tol = rel_pivot_tol * scale;
    min_pivot_ = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) perm_[i] = i;

    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        double best = std::abs(lu_[k * n + k]);
        for (std::size_t r = k + 1; r < n; ++r) {
            const double v = std::abs(lu_[r * n + k]);
            if (v > best) {
                best = v;
                piv = r;
            }
        }
        min_pivot_ = std::min(min_pivot_, best);
        if (!(best > tol)) {
            const double cond = best > 0.0 ? scale / best : std::numeric_limits<double>::infinity();
            throw NumericError("singular system matrix: pivot " + fmt(best) + " at column " + std::to_string(k) +
                               " (condition estimate >= " + fmt(cond) + ")");
        }
        if (piv != k) {
            for (std::size_t c = 0; c < n; ++c) std::swap(lu_[k * n + c], lu_[piv * n + c]);
            std::swap(perm_[k], perm_[piv]);
        }
        const double inv = 1.0 / lu_[k * n + k];
        for (std::size_t r = k + 1; r < n; ++r) {
            const double f = lu_[r * n + k] * inv;
            lu_[r * n + k] = f;
            if (f == 0.0) continue;
            for (std::size_t c = k + 1; c < n; ++c) lu_[r * n + c] -= f * lu_[k * n + c];
        }
    }
}

void LuFactorization::solve(std::span<double> rhs) const {
    if (rhs.size() != n_) throw ArgumentError("LU solve: right-hand side length mismatch");
    std::vector<double> x(n_);
    for (std::size_t i = 0; i < n_; ++i) x[i] = rhs[perm_[i]];
    for (std::size_t i = 0; i < n_; ++i) {
        double s = x[i];
        for (std::size_t j = 0; j < i; ++j) s -= lu_[i * n_ + j] * x[j];
        x[i] = s;
    }
    for (std::size_t i = n_; i-- > 0;) {
        double s = x[i];
        for (std::size_t j = i + 1; j < n_; ++j) s -= lu_[i * n_ + j] * x[j];
        x[i] = s / lu_[i * n_ + i];
    }
    std::copy(x.begin(), x.end(), rhs.begin());
}

TpsSystem::TpsSystem(ControlGrid grid) : grid_(std::move(grid)), m_(assemble(grid_)), lu_(m_, grid_.size() + 4) {
    if (grid_.size() < 5) throw ArgumentError("thin-plate spline needs at least 5 control points");
    const std::size_t m = order();

    // 1-norm condition number from the explicit inverse; the system is small.
    double norm_m = 0.0, norm_inv = 0.0;
    std::vector<double> col(m);
    for (std::size_t j = 0; j < m; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += std::abs(m_[i * m + j]);
        norm_m = std::max(norm_m, s);
        std::fill(col.begin(), col.end(), 0.0);
        col[j] = 1.0;
        lu_.solve(col);
        double t = 0.0;
        for (double x : col) t += std::abs(x);
        norm_inv = std::max(norm_inv, t);
    }
    cond_ = norm_m * norm_inv;
    if (!std::isfinite(cond_) || cond_ > 1e15) {
        throw NumericError("ill-conditioned system matrix (condition estimate " + fmt(cond_) + ")");
    }

    if (grid_.is_lattice()) {
        const auto cell = [](double extent, std::size_t n) { return extent / static_cast<double>(n - 1); };
        const Coord& last = grid_.points.back();
        const double smallest = std::min({cell(last.h, grid_.nh), cell(last.w, grid_.nw), cell(last.d, grid_.nd)});
        max_disp_ = 2.0 * smallest;
    } else {
        max_disp_ = std::numeric_limits<double>::infinity();
    }
}

void TpsSystem::validate(const Displacements& disp) const {
    if (disp.size() != size()) {
        throw ArgumentError("expected " + std::to_string(size()) + " control displacements, got " +
                            std::to_string(disp.size()));
    }
    for (std::size_t i = 0; i < disp.size(); ++i) {
        const Coord& d = disp.delta[i];
        if (!std::isfinite(d.h) || !std::isfinite(d.w) || !std::isfinite(d.d)) {
            throw NumericError("control displacement " + std::to_string(i) + " is not finite");
        }
        if (norm(d) > max_disp_) {
            throw NumericError("control displacement " + std::to_string(i) + " has magnitude " + fmt(norm(d)) +
                               " above the limit " + fmt(max_disp_));
        }
    }
}

TpsCoefficients TpsSystem::solve(const Displacements& disp) const {
    validate(disp);
    const std::size_t n = size();
    TpsCoefficients coef;
    coef.n_points = n;
    for (std::size_t ax = 0; ax < 3; ++ax) {
        std::vector<double> v(n + 4, 0.0);
        for (std::size_t i = 0; i < n; ++i) v[i] = grid_.points[i][ax] + disp.delta[i][ax];
        lu_.solve(v);
        coef.axis[ax] = std::move(v);
    }
    return coef;
}

Coord map_point(const TpsSystem& sys, const TpsCoefficients& coef, const Coord& p) {
    const std::size_t n = sys.size();
    if (coef.n_points != n) throw ArgumentError("coefficient count does not match the control grid");
    Coord out{};
    for (std::size_t ax = 0; ax < 3; ++ax) {
        out[ax] = coef.poly(ax, 0) + coef.poly(ax, 1) * p.h + coef.poly(ax, 2) * p.w + coef.poly(ax, 3) * p.d;
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double u = kernel_u_sq(dist_sq(p, sys.grid().points[i]));
        out.h += coef.radial(0, i) * u;
        out.w += coef.radial(1, i) * u;
        out.d += coef.radial(2, i) * u;
    }
    return out;
}

CoordField warp_field(const TpsSystem& sys, const TpsCoefficients& coef, const Dims& dims) {
    const CoordField lattice = lattice_field(dims);
    CoordField f(dims);
    for (std::size_t v = 0; v < dims.voxels(); ++v) {
        const Coord q = map_point(sys, coef, lattice.at(v));
        f.h[v] = q.h;
        f.w[v] = q.w;
        f.d[v] = q.d;
    }
    return f;
}

Volume warp_volume(const Volume& vol, const CoordField& field) {
    if (!(field.dims == vol.dims())) throw ArgumentError("warp_volume: field dims do not match volume dims");
    return resample(vol, field);
}

DisplacementBasis::DisplacementBasis(const TpsSystem& sys, Dims dims)
    : dims_(dims), n_(sys.size()), lattice_(lattice_field(dims)), w_(sys.size() * dims.voxels(), 0.0) {
    const std::size_t m = sys.order();
    const std::size_t voxels = dims.voxels();

    // Columns of M^{-1} for the first n_ unit vectors.
    std::vector<double> inv_cols(n_ * m);
    for (std::size_t i = 0; i < n_; ++i) {
        std::span<double> col(inv_cols.data() + i * m, m);
        col[i] = 1.0;
        sys.solve_in_place(col);
    }

    std::vector<double> b(m);
    const auto& dot = simd::kernels().dot;
    for (std::size_t v = 0; v < voxels; ++v) {
        const Coord p = lattice_.at(v);
        for (std::size_t k = 0; k < n_; ++k) b[k] = kernel_u_sq(dist_sq(p, sys.grid().points[k]));
        b[n_] = 1.0;
        b[n_ + 1] = p.h;
        b[n_ + 2] = p.w;
        b[n_ + 3] = p.d;
        for (std::size_t i = 0; i < n_; ++i) w_[i * voxels + v] = dot(b.data(), inv_cols.data() + i * m, m);
    }
}

CoordField DisplacementBasis::field(const Displacements& disp) const {
    if (disp.size() != n_) throw ArgumentError("displacement count does not match the basis");
    CoordField f = lattice_;
    const auto& axpy = simd::kernels().axpy;
    const std::size_t voxels = dims_.voxels();
    for (std::size_t i = 0; i < n_; ++i) {
        const double* wi = w_.data() + i * voxels;
        const Coord& d = disp.delta[i];
        if (d.h != 0.0) axpy(d.h, wi, f.h.data(), voxels);
        if (d.w != 0.0) axpy(d.w, wi, f.w.data(), voxels);
        if (d.d != 0.0) axpy(d.d, wi, f.d.data(), voxels);
    }
    return f;
}

void DisplacementBasis::accumulate_adjoint(const CoordField& grad_field, std::span<Coord> grad_delta) const {
    if (grad_delta.size() != n_) throw ArgumentError("gradient count does not match the basis");
    if (!(grad_field.dims == dims_)) throw ArgumentError("gradient field dims do not match the basis");
    const auto& dot = simd::kernels().dot;
    const std::size_t voxels = dims_.voxels();
    for (std::size_t i = 0; i < n_; ++i) {
        const double* wi = w_.data() + i * voxels;
        grad_delta[i].h += dot(wi, grad_field.h.data(), voxels);
        grad_delta[i].w += dot(wi, grad_field.w.data(), voxels);
        grad_delta[i].d += dot(wi, grad_field.d.data(), voxels);
    }
}

} // namespace pw
