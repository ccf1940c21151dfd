#include "priorwarp/affine.hpp"

#include <cmath>
#include <string>

#include "priorwarp/errors.hpp"
#include "priorwarp/simd/kernels.hpp"

namespace pw {

void validate_shifts(const ClassShifts& shifts, const Dims& dims) {
    const double diag = std::sqrt(static_cast<double>(dims.h * dims.h + dims.w * dims.w + dims.d * dims.d));
    for (std::size_t c = 0; c < shifts.size(); ++c) {
        const Coord& t = shifts.theta[c];
        for (std::size_t a = 0; a < 3; ++a) {
            if (!std::isfinite(t[a])) throw NumericError("class shift " + std::to_string(c) + " is not finite");
            if (std::abs(t[a]) > diag) {
                throw NumericError("class shift " + std::to_string(c) + " exceeds the grid diagonal (" +
                                   std::to_string(diag) + " voxels)");
            }
        }
    }
}

CoordField shifted_lattice(const Dims& dims, const Coord& theta) {
    CoordField f = lattice_field(dims);
    for (auto& x : f.h) x += theta.h;
    for (auto& x : f.w) x += theta.w;
    for (auto& x : f.d) x += theta.d;
    return f;
}

Volume apply_class_shifts(const Volume& prior, const ClassShifts& shifts) {
    if (shifts.size() != prior.channels()) {
        throw ArgumentError("apply_class_shifts: " + std::to_string(shifts.size()) + " shifts for a " +
                            std::to_string(prior.channels()) + "-channel prior");
    }
    validate_shifts(shifts, prior.dims());
    Volume out(prior.channels(), prior.dims(), prior.spacing());
    const auto& k = simd::kernels();
    const std::size_t n = prior.dims().voxels();
    for (std::size_t c = 0; c < prior.channels(); ++c) {
        const CoordField f = shifted_lattice(prior.dims(), shifts.theta[c]);
        k.trilinear(prior.channel(c).data(), prior.dims(), f.h.data(), f.w.data(), f.d.data(), out.channel(c).data(), n);
    }
    return out;
}

} // namespace pw
