#pragma once

// Inner-loop kernels with a scalar reference and ISA-specific variants.
//
// Every variant of a gather kernel (trilinear, trilinear_grad) performs the
// same sequence of IEEE operations as the scalar reference, so results are
// bit-identical across ISAs. Reductions (dot, sum) use a fixed lane layout per
// ISA: deterministic run to run, equal to the scalar reference to rounding.

#include <cstddef>
#include <string_view>

#include "priorwarp/volume.hpp"

namespace pw::simd {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

struct KernelTable {
    double (*dot)(const double* a, const double* b, std::size_t n);
    double (*sum)(const double* a, std::size_t n);
    // y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // out[i] = trilinear sample of vol (one channel, zero padded) at (fh[i], fw[i], fd[i]).
    void (*trilinear)(const double* vol, const Dims& dims, const double* fh, const double* fw, const double* fd,
                      double* out, std::size_t n);
    // g?[i] += upstream[i] * d(sample)/d(coordinate ?), right-continuous cell derivative.
    void (*trilinear_grad)(const double* vol, const Dims& dims, const double* fh, const double* fw, const double* fd,
                           const double* upstream, double* gh, double* gw, double* gd, std::size_t n);
};

bool isa_supported(Isa isa);

// The kernels for a given ISA; throws ArgumentError if unsupported on this CPU
// or not compiled in.
const KernelTable& kernels_for(Isa isa);

// Kernels selected at runtime: the best supported ISA unless overridden by
// set_active_isa() or the PRIORWARP_SIMD environment variable ("scalar",
// "avx2", "auto").
const KernelTable& kernels();
Isa active_isa();
void set_active_isa(Isa isa);

namespace detail {
const KernelTable& scalar_table();
#if defined(PRIORWARP_HAVE_AVX2)
const KernelTable& avx2_table();
#endif
} // namespace detail

} // namespace pw::simd
