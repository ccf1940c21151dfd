#include <atomic>
#include <cstdlib>
#include <string>

#include "priorwarp/errors.hpp"
#include "priorwarp/simd/kernels.hpp"

namespace pw::simd {
namespace {

Isa best_supported() {
    return isa_supported(Isa::avx2) ? Isa::avx2 : Isa::scalar;
}

Isa initial_isa() {
    const char* env = std::getenv("PRIORWARP_SIMD");
    if (env == nullptr) return best_supported();
    const std::string v(env);
    if (v == "scalar") return Isa::scalar;
    if (v == "avx2" && isa_supported(Isa::avx2)) return Isa::avx2;
    return best_supported();
}

std::atomic<Isa>& active() {
    static std::atomic<Isa> isa{initial_isa()};
    return isa;
}

} // namespace

std::string_view isa_name(Isa isa) {
    switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    }
    return "unknown";
}

bool isa_supported(Isa isa) {
    switch (isa) {
    case Isa::scalar: return true;
    case Isa::avx2:
#if defined(PRIORWARP_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
        return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
        return false;
#endif
    }
    return false;
}

const KernelTable& kernels_for(Isa isa) {
    if (!isa_supported(isa)) throw ArgumentError("SIMD variant not available: " + std::string(isa_name(isa)));
#if defined(PRIORWARP_HAVE_AVX2)
    if (isa == Isa::avx2) return detail::avx2_table();
#endif
    return detail::scalar_table();
}

const KernelTable& kernels() { return kernels_for(active().load(std::memory_order_relaxed)); }

Isa active_isa() { return active().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
    if (!isa_supported(isa)) throw ArgumentError("SIMD variant not available: " + std::string(isa_name(isa)));
    active().store(isa, std::memory_order_relaxed);
}

} // namespace pw::simd
