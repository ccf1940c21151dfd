#include <cmath>

#include "priorwarp/simd/kernels.hpp"

namespace pw::simd {
namespace {

// Reductions keep four interleaved partial sums combined as ((l0+l1)+l2)+l3,
// then add the tail, so every variant produces the same bits.
double dot_scalar(const double* a, const double* b, std::size_t n) {
    double l[4] = {0.0, 0.0, 0.0, 0.0};
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        for (std::size_t k = 0; k < 4; ++k) l[k] += a[i + k] * b[i + k];
    }
    double s = ((l[0] + l[1]) + l[2]) + l[3];
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

double sum_scalar(const double* a, std::size_t n) {
    double l[4] = {0.0, 0.0, 0.0, 0.0};
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        for (std::size_t k = 0; k < 4; ++k) l[k] += a[i + k];
    }
    double s = ((l[0] + l[1]) + l[2]) + l[3];
    for (; i < n; ++i) s += a[i];
    return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

struct Corners {
    double v000, v001, v010, v011, v100, v101, v110, v111;
    double th, tw, td;
};

// Corner values and fractional offsets of the floor cell around (x, y, z).
// Lattice positions outside the grid read as zero.
inline Corners gather_corners(const double* vol, const Dims& dims, double x, double y, double z) {
    const double hf = std::floor(x), wf = std::floor(y), df = std::floor(z);
    Corners c{};
    c.th = x - hf;
    c.tw = y - wf;
    c.td = z - df;
    const double H = static_cast<double>(dims.h), W = static_cast<double>(dims.w), D = static_cast<double>(dims.d);
    // Cells entirely outside the lattice contribute nothing; this also keeps
    // the integer conversion below in range.
    if (hf < -1.0 || hf > H - 1.0 || wf < -1.0 || wf > W - 1.0 || df < -1.0 || df > D - 1.0) {
        c.v000 = c.v001 = c.v010 = c.v011 = c.v100 = c.v101 = c.v110 = c.v111 = 0.0;
        return c;
    }
    const long h0 = static_cast<long>(hf), w0 = static_cast<long>(wf), d0 = static_cast<long>(df);
    const long Hl = static_cast<long>(dims.h), Wl = static_cast<long>(dims.w), Dl = static_cast<long>(dims.d);
    auto fetch = [&](long i, long j, long k) -> double {
        if (i < 0 || i >= Hl || j < 0 || j >= Wl || k < 0 || k >= Dl) return 0.0;
        return vol[(i * Wl + j) * Dl + k];
    };
    c.v000 = fetch(h0, w0, d0);
    c.v001 = fetch(h0, w0, d0 + 1);
    c.v010 = fetch(h0, w0 + 1, d0);
    c.v011 = fetch(h0, w0 + 1, d0 + 1);
    c.v100 = fetch(h0 + 1, w0, d0);
    c.v101 = fetch(h0 + 1, w0, d0 + 1);
    c.v110 = fetch(h0 + 1, w0 + 1, d0);
    c.v111 = fetch(h0 + 1, w0 + 1, d0 + 1);
    return c;
}

void trilinear_scalar(const double* vol, const Dims& dims, const double* fh, const double* fw, const double* fd,
                      double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const Corners c = gather_corners(vol, dims, fh[i], fw[i], fd[i]);
        const double omh = 1.0 - c.th, omw = 1.0 - c.tw, omd = 1.0 - c.td;
        const double c00 = c.v000 * omd + c.v001 * c.td;
        const double c01 = c.v010 * omd + c.v011 * c.td;
        const double c10 = c.v100 * omd + c.v101 * c.td;
        const double c11 = c.v110 * omd + c.v111 * c.td;
        const double c0 = c00 * omw + c01 * c.tw;
        const double c1 = c10 * omw + c11 * c.tw;
        out[i] = c0 * omh + c1 * c.th;
    }
}

void trilinear_grad_scalar(const double* vol, const Dims& dims, const double* fh, const double* fw, const double* fd,
                           const double* upstream, double* gh, double* gw, double* gd, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const Corners c = gather_corners(vol, dims, fh[i], fw[i], fd[i]);
        const double omh = 1.0 - c.th, omw = 1.0 - c.tw, omd = 1.0 - c.td;
        const double c00 = c.v000 * omd + c.v001 * c.td;
        const double c01 = c.v010 * omd + c.v011 * c.td;
        const double c10 = c.v100 * omd + c.v101 * c.td;
        const double c11 = c.v110 * omd + c.v111 * c.td;
        const double c0 = c00 * omw + c01 * c.tw;
        const double c1 = c10 * omw + c11 * c.tw;
        const double dh = c1 - c0;
        const double dw = (c01 - c00) * omh + (c11 - c10) * c.th;
        const double e0 = (c.v001 - c.v000) * omw + (c.v011 - c.v010) * c.tw;
        const double e1 = (c.v101 - c.v100) * omw + (c.v111 - c.v110) * c.tw;
        const double dd = e0 * omh + e1 * c.th;
        const double u = upstream[i];
        gh[i] += u * dh;
        gw[i] += u * dw;
        gd[i] += u * dd;
    }
}

} // namespace

namespace detail {
const KernelTable& scalar_table() {
    static const KernelTable table{dot_scalar, sum_scalar, axpy_scalar, trilinear_scalar, trilinear_grad_scalar};
    return table;
}
} // namespace detail

} // namespace pw::simd
