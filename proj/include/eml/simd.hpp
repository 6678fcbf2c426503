#ifndef EML_SIMD_HPP
#define EML_SIMD_HPP

#include <cstddef>

namespace eml::simd {

// Table of the arithmetic kernels behind the hot inner loops (reductions,
// elementwise maps, fused optimizer updates). Scalar implementations are
// the reference; vector variants must agree with them within rounding and
// are selected once at startup from CPU capabilities.
//
// Reductions run a fixed lane-count accumulation, so results are
// deterministic for a given table, but a vector table may round
// differently from the scalar one. Callers that freeze expected values do
// so against tolerances wide enough for either table.
struct KernelTable {
    const char* name;

    double (*sum)(const double* x, std::size_t n);
    double (*dot)(const double* x, const double* y, std::size_t n);
    // sum of elementwise minima (histogram intersection)
    double (*min_sum)(const double* x, const double* y, std::size_t n);
    // sum of (x_i - mx)^2
    double (*centered_sq_sum)(const double* x, double mx, std::size_t n);
    // sum of (x_i - mx) * (y_i - my)
    double (*centered_dot)(const double* x, double mx,
                           const double* y, double my, std::size_t n);

    // y += a * x
    void (*axpy)(double a, const double* x, double* y, std::size_t n);
    // x *= a
    void (*scale)(double a, double* x, std::size_t n);
    // out = a * x + b * y
    void (*lerp)(double a, const double* x, double b, const double* y,
                 double* out, std::size_t n);

    void (*relu)(const double* x, double* out, std::size_t n);
    // out = x > 0 ? g : 0
    void (*relu_backward)(const double* x, const double* g, double* out,
                          std::size_t n);

    // v = momentum * v + (g + weight_decay * w); w -= lr * v
    void (*momentum_update)(double* w, double* v, const double* g,
                            double lr, double momentum, double weight_decay,
                            std::size_t n);

    bool (*all_finite)(const double* x, std::size_t n);
};

// Reference implementation, always available.
const KernelTable& scalar_kernels();

// AVX2+FMA implementation, or nullptr when the build or the CPU lacks it.
const KernelTable* avx2_kernels();

// Table in use, chosen once: AVX2 when the CPU supports it, scalar
// otherwise. EML_KERNELS=scalar|avx2 in the environment overrides.
const KernelTable& active_kernels();

} // namespace eml::simd

#endif
