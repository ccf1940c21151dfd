#include "priorwarp/deform.hpp"

#include <algorithm>

#include "priorwarp/errors.hpp"
#include "priorwarp/simd/kernels.hpp"

namespace pw {

DeformPipeline::DeformPipeline(const TpsSystem& sys, Dims dims) : sys_(&sys), dims_(dims), basis_(sys, dims) {}

DeformForward DeformPipeline::forward(const Volume& probs, const DeformParams& params) const {
    if (!(probs.dims() == dims_)) throw ArgumentError("deform: prior dims do not match the pipeline");
    sys_->validate(params.disp);
    DeformForward out;
    out.affine = apply_class_shifts(probs, params.shifts);
    out.field = basis_.field(params.disp);
    out.deformed = warp_volume(out.affine, out.field);
    return out;
}

DeformBackward DeformPipeline::backward(const Volume& probs, const DeformParams& params, const DeformForward& fwd,
                                        const Volume& grad_deformed, const Volume* grad_affine_extra,
                                        bool want_probs) const {
    const std::size_t C = probs.channels();
    const std::size_t n = dims_.voxels();
    const auto& k = simd::kernels();
    if (grad_deformed.channels() != C || !(grad_deformed.dims() == dims_)) {
        throw ArgumentError("deform backward: gradient shape mismatch");
    }

    // TPS stage: gradient w.r.t. the shared field and the affine volume.
    CoordField grad_field(dims_);
    Volume grad_affine(C, dims_);
    for (std::size_t c = 0; c < C; ++c) {
        k.trilinear_grad(fwd.affine.channel(c).data(), dims_, fwd.field.h.data(), fwd.field.w.data(),
                         fwd.field.d.data(), grad_deformed.channel(c).data(), grad_field.h.data(), grad_field.w.data(),
                         grad_field.d.data(), n);
        trilinear_scatter(grad_affine.channel(c), dims_, fwd.field, grad_deformed.channel(c));
    }
    if (grad_affine_extra != nullptr) {
        for (std::size_t i = 0; i < grad_affine.data().size(); ++i) grad_affine.data()[i] += grad_affine_extra->data()[i];
    }

    DeformBackward out;
    out.d_delta.assign(basis_.size(), Coord{});
    basis_.accumulate_adjoint(grad_field, out.d_delta);

    // Affine stage: the Jacobian of p + theta_c in theta_c is the identity, so
    // d/dtheta_c is the spatial gradient of the prior at the shifted lattice.
    out.d_theta.assign(C, Coord{});
    if (want_probs) out.d_probs = Volume(C, dims_);
    std::vector<double> gh(n), gw(n), gd(n);
    for (std::size_t c = 0; c < C; ++c) {
        const CoordField src = shifted_lattice(dims_, params.shifts.theta[c]);
        std::fill(gh.begin(), gh.end(), 0.0);
        std::fill(gw.begin(), gw.end(), 0.0);
        std::fill(gd.begin(), gd.end(), 0.0);
        k.trilinear_grad(probs.channel(c).data(), dims_, src.h.data(), src.w.data(), src.d.data(),
                         grad_affine.channel(c).data(), gh.data(), gw.data(), gd.data(), n);
        out.d_theta[c] = {k.sum(gh.data(), n), k.sum(gw.data(), n), k.sum(gd.data(), n)};
        if (want_probs) trilinear_scatter(out.d_probs.channel(c), dims_, src, grad_affine.channel(c));
    }
    return out;
}

} // namespace pw
