#include "eml/simd.hpp"

#include <cmath>

namespace eml::simd {
namespace {

double sum_scalar(const double* x, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

double dot_scalar(const double* x, const double* y, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

double min_sum_scalar(const double* x, const double* y, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] < y[i] ? x[i] : y[i];
    return acc;
}

double centered_sq_sum_scalar(const double* x, double mx, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = x[i] - mx;
        acc += d * d;
    }
    return acc;
}

double centered_dot_scalar(const double* x, double mx,
                           const double* y, double my, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += (x[i] - mx) * (y[i] - my);
    return acc;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scale_scalar(double a, double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

void lerp_scalar(double a, const double* x, double b, const double* y,
                 double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a * x[i] + b * y[i];
}

void relu_scalar(const double* x, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward_scalar(const double* x, const double* g, double* out,
                          std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? g[i] : 0.0;
}

void momentum_update_scalar(double* w, double* v, const double* g,
                            double lr, double momentum, double weight_decay,
                            std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        v[i] = momentum * v[i] + (g[i] + weight_decay * w[i]);
        w[i] -= lr * v[i];
    }
}

bool all_finite_scalar(const double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(x[i])) return false;
    }
    return true;
}

constexpr KernelTable kScalarTable = {
    "scalar",
    sum_scalar,
    dot_scalar,
    min_sum_scalar,
    centered_sq_sum_scalar,
    centered_dot_scalar,
    axpy_scalar,
    scale_scalar,
    lerp_scalar,
    relu_scalar,
    relu_backward_scalar,
    momentum_update_scalar,
    all_finite_scalar,
};

} // namespace

const KernelTable& scalar_kernels() { return kScalarTable; }

} // namespace eml::simd
