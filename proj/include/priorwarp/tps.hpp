#pragma once

// Three-dimensional thin-plate-spline warping shared by all channels.
//
// Target control points sit on a fixed lattice. Each control point i is
// paired with a source point p_i + delta_i; the spline maps every target
// coordinate p to a source coordinate
//
//   p'_axis = a_1 + a_h h + a_w w + a_d d + sum_i a^(i) U(|p - p_i|),
//   U(r)    = r^2 ln r^2,
//
// with the coefficients obtained from the block system
//
//   M = | K   P |   K_ij = U(|p_i - p_j|),  P_i = (1, h_i, w_i, d_i),
//       | P^T 0 |
//
// M depends only on the target points, so it is factorised once per grid and
// reused for every solve.

#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "priorwarp/volume.hpp"

namespace pw {

// U(r) = r^2 ln r^2 with U(0) = 0. Throws ArgumentError for r < 0.
double kernel_u(double r);
// Same kernel from the squared distance, avoiding a sqrt/square round trip.
inline double kernel_u_sq(double r2) { return r2 > 0.0 ? r2 * std::log(r2) : 0.0; }

struct ControlGrid {
    std::size_t nh = 0, nw = 0, nd = 0;  // lattice shape; zero for explicit point sets
    std::vector<Coord> points;           // (h, w, d) lexicographic, d fastest

    // Lattice nodes at fractions k/(n-1) of each axis extent, borders included.
    static ControlGrid lattice(std::size_t nh, std::size_t nw, std::size_t nd, const Dims& extent);
    static ControlGrid from_points(std::vector<Coord> points);

    std::size_t size() const { return points.size(); }
    bool is_lattice() const { return nh > 0; }
};

// Dense LU factorisation with partial pivoting.
class LuFactorization {
  public:
    // Throws NumericError if a pivot falls below rel_pivot_tol * max|A|.
    LuFactorization(std::vector<double> a, std::size_t n, double rel_pivot_tol = 1e-12);

    std::size_t size() const { return n_; }
    void solve(std::span<double> rhs) const;
    double min_pivot() const { return min_pivot_; }

  private:
    std::size_t n_ = 0;
    std::vector<double> lu_;
    std::vector<std::size_t> perm_;
    double min_pivot_ = 0.0;
};

struct Displacements {
    std::vector<Coord> delta;

    Displacements() = default;
    explicit Displacements(std::size_t n) : delta(n) {}
    std::size_t size() const { return delta.size(); }
};

struct TpsCoefficients {
    std::size_t n_points = 0;
    // Per axis (h, w, d): n_points radial weights then (const, h, w, d).
    std::array<std::vector<double>, 3> axis;

    double radial(std::size_t ax, std::size_t i) const { return axis[ax][i]; }
    double poly(std::size_t ax, std::size_t k) const { return axis[ax][n_points + k]; }
};

class TpsSystem {
  public:
    // Builds and factorises M. Throws NumericError (naming the condition
    // estimate) if M is singular or numerically so.
    explicit TpsSystem(ControlGrid grid);

    const ControlGrid& grid() const { return grid_; }
    std::size_t size() const { return grid_.size(); }
    std::size_t order() const { return grid_.size() + 4; }

    // Row-major (N+4)x(N+4) system matrix.
    const std::vector<double>& matrix() const { return m_; }
    // 1-norm condition number, computed from the explicit inverse.
    double condition_estimate() const { return cond_; }

    // Bound on |delta_i|. Lattices default to twice the smallest cell edge.
    double max_displacement() const { return max_disp_; }
    void set_max_displacement(double v) { max_disp_ = v; }

    // NumericError for non-finite or over-limit displacements, ArgumentError for
    // a count mismatch.
    void validate(const Displacements& disp) const;

    // M^{-1} v in place (v of length N+4).
    void solve_in_place(std::span<double> v) const { lu_.solve(v); }

    TpsCoefficients solve(const Displacements& disp) const;

  private:
    ControlGrid grid_;
    std::vector<double> m_;
    LuFactorization lu_;
    double cond_ = 0.0;
    double max_disp_ = 0.0;
};

Coord map_point(const TpsSystem& sys, const TpsCoefficients& coef, const Coord& p);

// Coordinate field of map_point over every voxel of dims.
CoordField warp_field(const TpsSystem& sys, const TpsCoefficients& coef, const Dims& dims);

// out(c, p) = trilinear_sample(vol, c, field[p]) with one field for all channels.
Volume warp_volume(const Volume& vol, const CoordField& field);

// The spline is linear in the source vector and reproduces affine maps
// exactly, so the dense field is
//
//   field(p) = p + sum_i basis_i(p) delta_i,  basis_i(p) = b(p)^T M^{-1} e_i,
//
// where b(p) = (U(|p - p_1|), ..., U(|p - p_N|), 1, h, w, d). The basis is
// precomputed once per (grid, dims); field evaluation and its adjoint with
// respect to delta are then axpy/dot passes over the voxels.
class DisplacementBasis {
  public:
    DisplacementBasis(const TpsSystem& sys, Dims dims);

    const Dims& dims() const { return dims_; }
    std::size_t size() const { return n_; }
    std::span<const double> weights(std::size_t i) const { return {w_.data() + i * dims_.voxels(), dims_.voxels()}; }

    CoordField field(const Displacements& disp) const;
    // grad_delta[i] += sum_p basis_i(p) * grad_field(p)
    void accumulate_adjoint(const CoordField& grad_field, std::span<Coord> grad_delta) const;

  private:
    Dims dims_;
    std::size_t n_ = 0;
    CoordField lattice_;
    std::vector<double> w_;  // n_ rows of length dims_.voxels()
};

} // namespace pw
