#include "priorwarp/volume.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "priorwarp/errors.hpp"
#include "priorwarp/simd/kernels.hpp"

namespace pw {

double norm(const Coord& c) { return std::sqrt(c.h * c.h + c.w * c.w + c.d * c.d); }

namespace {

void check_dims(const Dims& dims) {
    if (dims.h == 0 || dims.w == 0 || dims.d == 0) throw ArgumentError("volume dims must be positive");
}

} // namespace

Volume::Volume(std::size_t channels, Dims dims, Spacing spacing)
    : channels_(channels), dims_(dims), spacing_(spacing), data_(channels * dims.voxels(), 0.0) {
    if (channels == 0) throw ArgumentError("volume needs at least one channel");
    check_dims(dims);
}

Volume::Volume(std::size_t channels, Dims dims, std::vector<double> data, Spacing spacing)
    : channels_(channels), dims_(dims), spacing_(spacing), data_(std::move(data)) {
    if (channels == 0) throw ArgumentError("volume needs at least one channel");
    check_dims(dims);
    if (data_.size() != channels * dims.voxels()) {
        throw ArgumentError("volume data length " + std::to_string(data_.size()) + " does not match C*H*W*D = " +
                            std::to_string(channels * dims.voxels()));
    }
}

void Volume::check_finite(const char* what) const {
    for (std::size_t i = 0; i < data_.size(); ++i) {
        if (!std::isfinite(data_[i])) {
            throw NumericError(std::string(what) + ": non-finite value at flat index " + std::to_string(i));
        }
    }
}

LabelMap::LabelMap(Dims dims, Spacing spacing) : dims_(dims), spacing_(spacing), labels_(dims.voxels(), 0) {
    check_dims(dims);
}

LabelMap::LabelMap(Dims dims, std::vector<std::uint8_t> labels, Spacing spacing)
    : dims_(dims), spacing_(spacing), labels_(std::move(labels)) {
    check_dims(dims);
    if (labels_.size() != dims.voxels()) throw ArgumentError("label map length does not match H*W*D");
}

std::uint8_t LabelMap::max_label() const {
    return labels_.empty() ? 0 : *std::max_element(labels_.begin(), labels_.end());
}

CoordField::CoordField(Dims dims_) : dims(dims_), h(dims_.voxels()), w(dims_.voxels()), d(dims_.voxels()) {}

CoordField lattice_field(Dims dims) {
    CoordField f(dims);
    std::size_t v = 0;
    for (std::size_t i = 0; i < dims.h; ++i) {
        for (std::size_t j = 0; j < dims.w; ++j) {
            for (std::size_t k = 0; k < dims.d; ++k, ++v) {
                f.h[v] = static_cast<double>(i);
                f.w[v] = static_cast<double>(j);
                f.d[v] = static_cast<double>(k);
            }
        }
    }
    return f;
}

double trilinear_sample(const Volume& vol, std::size_t channel, const Coord& p) {
    if (channel >= vol.channels()) {
        throw ArgumentError("channel " + std::to_string(channel) + " out of range for " +
                            std::to_string(vol.channels()) + "-channel volume");
    }
    double out = 0.0;
    simd::kernels().trilinear(vol.channel(channel).data(), vol.dims(), &p.h, &p.w, &p.d, &out, 1);
    return out;
}

Coord trilinear_gradient(const Volume& vol, std::size_t channel, const Coord& p) {
    if (channel >= vol.channels()) throw ArgumentError("channel out of range");
    Coord g{};
    const double one = 1.0;
    simd::kernels().trilinear_grad(vol.channel(channel).data(), vol.dims(), &p.h, &p.w, &p.d, &one, &g.h, &g.w, &g.d, 1);
    return g;
}

void trilinear_scatter(std::span<double> grad, const Dims& dims, const CoordField& field, std::span<const double> upstream) {
    const long H = static_cast<long>(dims.h), W = static_cast<long>(dims.w), D = static_cast<long>(dims.d);
    const std::size_t n = field.h.size();
    for (std::size_t v = 0; v < n; ++v) {
        const double u = upstream[v];
        if (u == 0.0) continue;
        const double x = field.h[v], y = field.w[v], z = field.d[v];
        const double hf = std::floor(x), wf = std::floor(y), df = std::floor(z);
        if (hf < -1.0 || hf > H - 1.0 || wf < -1.0 || wf > W - 1.0 || df < -1.0 || df > D - 1.0) continue;
        const double th = x - hf, tw = y - wf, td = z - df;
        const long h0 = static_cast<long>(hf), w0 = static_cast<long>(wf), d0 = static_cast<long>(df);
        const double wh[2] = {1.0 - th, th}, ww[2] = {1.0 - tw, tw}, wd[2] = {1.0 - td, td};
        for (int a = 0; a < 2; ++a) {
            const long i = h0 + a;
            if (i < 0 || i >= H) continue;
            for (int b = 0; b < 2; ++b) {
                const long j = w0 + b;
                if (j < 0 || j >= W) continue;
                for (int c = 0; c < 2; ++c) {
                    const long k = d0 + c;
                    if (k < 0 || k >= D) continue;
                    grad[static_cast<std::size_t>((i * W + j) * D + k)] += u * (wh[a] * ww[b] * wd[c]);
                }
            }
        }
    }
}

Volume resample(const Volume& vol, const CoordField& field) {
    if (!(field.dims == vol.dims())) throw ArgumentError("coordinate field dims do not match volume dims");
    Volume out(vol.channels(), vol.dims(), vol.spacing());
    const auto& k = simd::kernels();
    const std::size_t n = vol.dims().voxels();
    for (std::size_t c = 0; c < vol.channels(); ++c) {
        k.trilinear(vol.channel(c).data(), vol.dims(), field.h.data(), field.w.data(), field.d.data(),
                    out.channel(c).data(), n);
    }
    return out;
}

Volume one_hot(const LabelMap& lm, std::size_t c_cls) {
    if (c_cls == 0) throw ArgumentError("one_hot needs c_cls >= 1");
    Volume out(c_cls, lm.dims(), lm.spacing());
    const auto& labels = lm.labels();
    for (std::size_t v = 0; v < labels.size(); ++v) {
        const std::size_t l = labels[v];
        if (l > c_cls) {
            throw ArgumentError("label " + std::to_string(l) + " at voxel " + std::to_string(v) + " exceeds c_cls " +
                                std::to_string(c_cls));
        }
        if (l > 0) out.channel(l - 1)[v] = 1.0;
    }
    return out;
}

LabelMap channel_argmax(const Volume& vol, double background_threshold) {
    LabelMap out(vol.dims(), vol.spacing());
    if (vol.channels() > 255) throw ArgumentError("label maps hold at most 255 classes");
    const std::size_t n = vol.dims().voxels();
    for (std::size_t v = 0; v < n; ++v) {
        std::size_t best = 0;
        double best_val = vol.channel(0)[v];
        for (std::size_t c = 1; c < vol.channels(); ++c) {
            const double x = vol.channel(c)[v];
            if (x > best_val) {
                best_val = x;
                best = c;
            }
        }
        out.labels()[v] = best_val > background_threshold ? static_cast<std::uint8_t>(best + 1) : 0;
    }
    return out;
}

} // namespace pw
