#include "eml/simd.hpp"

#include <cstdlib>
#include <cstring>

namespace eml::simd {

#if defined(EML_BUILD_AVX2)
const KernelTable* avx2_table_impl();
#endif

const KernelTable* avx2_kernels() {
#if defined(EML_BUILD_AVX2)
    if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
        return avx2_table_impl();
#endif
    return nullptr;
}

namespace {

const KernelTable* select() {
    if (const char* want = std::getenv("EML_KERNELS")) {
        if (std::strcmp(want, "scalar") == 0) return &scalar_kernels();
        if (std::strcmp(want, "avx2") == 0 && avx2_kernels()) return avx2_kernels();
    }
    if (const KernelTable* t = avx2_kernels()) return t;
    return &scalar_kernels();
}

} // namespace

const KernelTable& active_kernels() {
    static const KernelTable* table = select();
    return *table;
}

} // namespace eml::simd
