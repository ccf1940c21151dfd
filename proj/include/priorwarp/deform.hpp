#pragma once

// The two-stage deformation applied to prior probabilities: a per-class
// translation followed by a thin-plate-spline warp shared by all classes.
//
//   affine(c, q)   = probs(c, q + theta_c)
//   deformed(c, p) = affine(c, field(p)),  field(p) = p + sum_i basis_i(p) delta_i

#include <vector>

#include "priorwarp/affine.hpp"
#include "priorwarp/tps.hpp"

namespace pw {

struct DeformParams {
    ClassShifts shifts;
    Displacements disp;

    static DeformParams identity(std::size_t c_cls, std::size_t n_control) {
        return {ClassShifts(c_cls), Displacements(n_control)};
    }
};

struct DeformForward {
    Volume affine;
    CoordField field;
    Volume deformed;
};

struct DeformBackward {
    std::vector<Coord> d_theta;
    std::vector<Coord> d_delta;
    Volume d_probs;  // empty unless requested
};

class DeformPipeline {
  public:
    DeformPipeline(const TpsSystem& sys, Dims dims);

    const TpsSystem& system() const { return *sys_; }
    const DisplacementBasis& basis() const { return basis_; }
    const Dims& dims() const { return dims_; }

    DeformForward forward(const Volume& probs, const DeformParams& params) const;

    // Chain rule through both resampling stages. grad_deformed is dL/d(deformed);
    // grad_affine_extra is any loss term taken directly on the affine stage
    // (may be empty). Trilinear derivatives use the floor cell.
    DeformBackward backward(const Volume& probs, const DeformParams& params, const DeformForward& fwd,
                            const Volume& grad_deformed, const Volume* grad_affine_extra, bool want_probs) const;

  private:
    const TpsSystem* sys_;
    Dims dims_;
    DisplacementBasis basis_;
};

} // namespace pw
