#pragma once

// Per-class translation of a multi-channel prior. Only the shift column of
// the homogeneous affine matrix is free; the linear block stays identity.

#include <vector>

#include "priorwarp/volume.hpp"

namespace pw {

struct ClassShifts {
    std::vector<Coord> theta;  // one shift per class, voxel units

    ClassShifts() = default;
    explicit ClassShifts(std::size_t c_cls) : theta(c_cls) {}
    std::size_t size() const { return theta.size(); }
};

// Backward map: the output at p reads the source at p + theta.
inline Coord affine_map(const Coord& p, const Coord& theta) { return p + theta; }

// Throws ArgumentError on a channel/shift count mismatch, NumericError on a
// non-finite shift or one larger than the grid diagonal.
void validate_shifts(const ClassShifts& shifts, const Dims& dims);

// Channel c of the result is the prior's channel c sampled at p + theta_c.
Volume apply_class_shifts(const Volume& prior, const ClassShifts& shifts);

// Per-channel source coordinates p + theta_c (shared lattice, one field per class).
CoordField shifted_lattice(const Dims& dims, const Coord& theta);

} // namespace pw
