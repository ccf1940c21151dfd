// AVX2 variants. This translation unit is compiled with -mavx2 -mfma; the
// arithmetic below deliberately avoids FMA so the gather kernels reproduce
// the scalar reference bit for bit.

#include <immintrin.h>

#include <array>

#include "priorwarp/simd/kernels.hpp"

namespace pw::simd {
namespace {

double hsum_ordered(__m256d v) {
    alignas(32) std::array<double, 4> lanes;
    _mm256_store_pd(lanes.data(), v);
    return ((lanes[0] + lanes[1]) + lanes[2]) + lanes[3];
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    double s = hsum_ordered(acc);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

double sum_avx2(const double* a, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
    double s = hsum_ordered(acc);
    for (; i < n; ++i) s += a[i];
    return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), _mm256_mul_pd(va, _mm256_loadu_pd(x + i))));
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

struct Corners4 {
    __m256d v000, v001, v010, v011, v100, v101, v110, v111;
    __m256d th, tw, td;
};

inline __m256d in_range(__m256d f, double lo, double hi) {
    return _mm256_and_pd(_mm256_cmp_pd(f, _mm256_set1_pd(lo), _CMP_GE_OQ),
                         _mm256_cmp_pd(f, _mm256_set1_pd(hi), _CMP_LE_OQ));
}

inline Corners4 gather4(const double* vol, const Dims& dims, __m256d x, __m256d y, __m256d z) {
    const double H = static_cast<double>(dims.h), W = static_cast<double>(dims.w), D = static_cast<double>(dims.d);
    const __m256d hf = _mm256_floor_pd(x), wf = _mm256_floor_pd(y), df = _mm256_floor_pd(z);
    Corners4 c;
    c.th = _mm256_sub_pd(x, hf);
    c.tw = _mm256_sub_pd(y, wf);
    c.td = _mm256_sub_pd(z, df);

    const __m256d cell_ok =
        _mm256_and_pd(_mm256_and_pd(in_range(hf, -1.0, H - 1.0), in_range(wf, -1.0, W - 1.0)), in_range(df, -1.0, D - 1.0));
    const __m256d h0_ok = in_range(hf, 0.0, H - 1.0), h1_ok = in_range(hf, -1.0, H - 2.0);
    const __m256d w0_ok = in_range(wf, 0.0, W - 1.0), w1_ok = in_range(wf, -1.0, W - 2.0);
    const __m256d d0_ok = in_range(df, 0.0, D - 1.0), d1_ok = in_range(df, -1.0, D - 2.0);

    // Zero out-of-cell lanes before the integer conversion.
    const __m128i h0 = _mm256_cvtpd_epi32(_mm256_and_pd(hf, cell_ok));
    const __m128i w0 = _mm256_cvtpd_epi32(_mm256_and_pd(wf, cell_ok));
    const __m128i d0 = _mm256_cvtpd_epi32(_mm256_and_pd(df, cell_ok));
    const int Wi = static_cast<int>(dims.w), Di = static_cast<int>(dims.d);
    const __m128i base =
        _mm_add_epi32(_mm_mullo_epi32(_mm_add_epi32(_mm_mullo_epi32(h0, _mm_set1_epi32(Wi)), w0), _mm_set1_epi32(Di)), d0);
    const __m128i step_d = _mm_set1_epi32(1), step_w = _mm_set1_epi32(Di), step_h = _mm_set1_epi32(Wi * Di);

    const __m256d zero = _mm256_setzero_pd();
    auto load = [&](__m128i idx, __m256d hm, __m256d wm, __m256d dm) {
        const __m256d mask = _mm256_and_pd(cell_ok, _mm256_and_pd(hm, _mm256_and_pd(wm, dm)));
        return _mm256_mask_i32gather_pd(zero, vol, idx, mask, 8);
    };
    const __m128i i000 = base;
    const __m128i i001 = _mm_add_epi32(base, step_d);
    const __m128i i010 = _mm_add_epi32(base, step_w);
    const __m128i i011 = _mm_add_epi32(i010, step_d);
    const __m128i i100 = _mm_add_epi32(base, step_h);
    const __m128i i101 = _mm_add_epi32(i100, step_d);
    const __m128i i110 = _mm_add_epi32(i100, step_w);
    const __m128i i111 = _mm_add_epi32(i110, step_d);
    c.v000 = load(i000, h0_ok, w0_ok, d0_ok);
    c.v001 = load(i001, h0_ok, w0_ok, d1_ok);
    c.v010 = load(i010, h0_ok, w1_ok, d0_ok);
    c.v011 = load(i011, h0_ok, w1_ok, d1_ok);
    c.v100 = load(i100, h1_ok, w0_ok, d0_ok);
    c.v101 = load(i101, h1_ok, w0_ok, d1_ok);
    c.v110 = load(i110, h1_ok, w1_ok, d0_ok);
    c.v111 = load(i111, h1_ok, w1_ok, d1_ok);
    return c;
}

inline __m256d lerp(__m256d a, __m256d b, __m256d one_minus_t, __m256d t) {
    return _mm256_add_pd(_mm256_mul_pd(a, one_minus_t), _mm256_mul_pd(b, t));
}

void trilinear_avx2(const double* vol, const Dims& dims, const double* fh, const double* fw, const double* fd,
                    double* out, std::size_t n) {
    const __m256d one = _mm256_set1_pd(1.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const Corners4 c = gather4(vol, dims, _mm256_loadu_pd(fh + i), _mm256_loadu_pd(fw + i), _mm256_loadu_pd(fd + i));
        const __m256d omh = _mm256_sub_pd(one, c.th), omw = _mm256_sub_pd(one, c.tw), omd = _mm256_sub_pd(one, c.td);
        const __m256d c00 = lerp(c.v000, c.v001, omd, c.td);
        const __m256d c01 = lerp(c.v010, c.v011, omd, c.td);
        const __m256d c10 = lerp(c.v100, c.v101, omd, c.td);
        const __m256d c11 = lerp(c.v110, c.v111, omd, c.td);
        const __m256d c0 = lerp(c00, c01, omw, c.tw);
        const __m256d c1 = lerp(c10, c11, omw, c.tw);
        _mm256_storeu_pd(out + i, lerp(c0, c1, omh, c.th));
    }
    if (i < n) detail::scalar_table().trilinear(vol, dims, fh + i, fw + i, fd + i, out + i, n - i);
}

void trilinear_grad_avx2(const double* vol, const Dims& dims, const double* fh, const double* fw, const double* fd,
                         const double* upstream, double* gh, double* gw, double* gd, std::size_t n) {
    const __m256d one = _mm256_set1_pd(1.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const Corners4 c = gather4(vol, dims, _mm256_loadu_pd(fh + i), _mm256_loadu_pd(fw + i), _mm256_loadu_pd(fd + i));
        const __m256d omh = _mm256_sub_pd(one, c.th), omw = _mm256_sub_pd(one, c.tw), omd = _mm256_sub_pd(one, c.td);
        const __m256d c00 = lerp(c.v000, c.v001, omd, c.td);
        const __m256d c01 = lerp(c.v010, c.v011, omd, c.td);
        const __m256d c10 = lerp(c.v100, c.v101, omd, c.td);
        const __m256d c11 = lerp(c.v110, c.v111, omd, c.td);
        const __m256d c0 = lerp(c00, c01, omw, c.tw);
        const __m256d c1 = lerp(c10, c11, omw, c.tw);
        const __m256d dh = _mm256_sub_pd(c1, c0);
        const __m256d dw = lerp(_mm256_sub_pd(c01, c00), _mm256_sub_pd(c11, c10), omh, c.th);
        const __m256d e0 = lerp(_mm256_sub_pd(c.v001, c.v000), _mm256_sub_pd(c.v011, c.v010), omw, c.tw);
        const __m256d e1 = lerp(_mm256_sub_pd(c.v101, c.v100), _mm256_sub_pd(c.v111, c.v110), omw, c.tw);
        const __m256d dd = lerp(e0, e1, omh, c.th);
        const __m256d u = _mm256_loadu_pd(upstream + i);
        _mm256_storeu_pd(gh + i, _mm256_add_pd(_mm256_loadu_pd(gh + i), _mm256_mul_pd(u, dh)));
        _mm256_storeu_pd(gw + i, _mm256_add_pd(_mm256_loadu_pd(gw + i), _mm256_mul_pd(u, dw)));
        _mm256_storeu_pd(gd + i, _mm256_add_pd(_mm256_loadu_pd(gd + i), _mm256_mul_pd(u, dd)));
    }
    if (i < n) {
        detail::scalar_table().trilinear_grad(vol, dims, fh + i, fw + i, fd + i, upstream + i, gh + i, gw + i, gd + i,
                                              n - i);
    }
}

} // namespace

namespace detail {
const KernelTable& avx2_table() {
    static const KernelTable table{dot_avx2, sum_avx2, axpy_avx2, trilinear_avx2, trilinear_grad_avx2};
    return table;
}
} // namespace detail

} // namespace pw::simd
