#include "reaps/kernels.hpp"

#include <atomic>
#include <cstring>

#include "reaps/error.hpp"

namespace reaps::kern {

// ---------------------------------------------------------------- scalar ref

namespace scalar {

double dot_f32(const float* a, const float* b, std::size_t n) {
    double l[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    std::size_t k = 0;
    const std::size_t n8 = n & ~std::size_t(7);
    for (; k < n8; k += 8) {
        l[0] += static_cast<double>(a[k + 0]) * static_cast<double>(b[k + 0]);
        l[1] += static_cast<double>(a[k + 1]) * static_cast<double>(b[k + 1]);
        l[2] += static_cast<double>(a[k + 2]) * static_cast<double>(b[k + 2]);
        l[3] += static_cast<double>(a[k + 3]) * static_cast<double>(b[k + 3]);
        l[4] += static_cast<double>(a[k + 4]) * static_cast<double>(b[k + 4]);
        l[5] += static_cast<double>(a[k + 5]) * static_cast<double>(b[k + 5]);
        l[6] += static_cast<double>(a[k + 6]) * static_cast<double>(b[k + 6]);
        l[7] += static_cast<double>(a[k + 7]) * static_cast<double>(b[k + 7]);
    }
    for (; k < n; ++k)
        l[k & 7] += static_cast<double>(a[k]) * static_cast<double>(b[k]);
    return ((l[0] + l[1]) + (l[2] + l[3])) + ((l[4] + l[5]) + (l[6] + l[7]));
}

double sum_f32(const float* x, std::size_t n) {
    double l[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    std::size_t k = 0;
    const std::size_t n8 = n & ~std::size_t(7);
    for (; k < n8; k += 8) {
        l[0] += static_cast<double>(x[k + 0]);
        l[1] += static_cast<double>(x[k + 1]);
        l[2] += static_cast<double>(x[k + 2]);
        l[3] += static_cast<double>(x[k + 3]);
        l[4] += static_cast<double>(x[k + 4]);
        l[5] += static_cast<double>(x[k + 5]);
        l[6] += static_cast<double>(x[k + 6]);
        l[7] += static_cast<double>(x[k + 7]);
    }
    for (; k < n; ++k) l[k & 7] += static_cast<double>(x[k]);
    return ((l[0] + l[1]) + (l[2] + l[3])) + ((l[4] + l[5]) + (l[6] + l[7]));
}

void axpy_acc_f32(double* acc, float a, const float* x, std::size_t n) {
    const double ad = static_cast<double>(a);
    for (std::size_t i = 0; i < n; ++i)
        acc[i] += ad * static_cast<double>(x[i]);
}

void relu_f32(const float* x, float* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_bwd_f32(const float* x, const float* gy, float* gx, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        if (x[i] > 0.0f) gx[i] += gy[i];
}

void add_f32(const float* a, const float* b, float* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

void mul_f32(const float* a, const float* b, float* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

void scale_f32(const float* x, float s, float* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = s * x[i];
}

}  // namespace scalar

// --------------------------------------------------------------- dispatch

struct FloatKernels {
    double (*dot)(const float*, const float*, std::size_t);
    double (*sum)(const float*, std::size_t);
    void (*axpy_acc)(double*, float, const float*, std::size_t);
    void (*relu)(const float*, float*, std::size_t);
    void (*relu_bwd)(const float*, const float*, float*, std::size_t);
    void (*add)(const float*, const float*, float*, std::size_t);
    void (*mul)(const float*, const float*, float*, std::size_t);
    void (*scale)(const float*, float, float*, std::size_t);
};

static constexpr FloatKernels kScalarTable = {
    scalar::dot_f32,  scalar::sum_f32, scalar::axpy_acc_f32, scalar::relu_f32,
    scalar::relu_bwd_f32, scalar::add_f32, scalar::mul_f32,  scalar::scale_f32,
};

#ifdef REAPS_HAVE_AVX2
namespace avx2 {
double dot_f32(const float*, const float*, std::size_t);
double sum_f32(const float*, std::size_t);
void axpy_acc_f32(double*, float, const float*, std::size_t);
void relu_f32(const float*, float*, std::size_t);
void relu_bwd_f32(const float*, const float*, float*, std::size_t);
void add_f32(const float*, const float*, float*, std::size_t);
void mul_f32(const float*, const float*, float*, std::size_t);
void scale_f32(const float*, float, float*, std::size_t);
}  // namespace avx2

static constexpr FloatKernels kAvx2Table = {
    avx2::dot_f32,  avx2::sum_f32, avx2::axpy_acc_f32, avx2::relu_f32,
    avx2::relu_bwd_f32, avx2::add_f32, avx2::mul_f32,  avx2::scale_f32,
};
#endif

bool cpu_supports(Isa isa) {
    switch (isa) {
        case Isa::scalar: return true;
        case Isa::avx2:
#if defined(REAPS_HAVE_AVX2)
            return __builtin_cpu_supports("avx2") != 0;
#else
            return false;
#endif
    }
    return false;
}

const char* isa_name(Isa isa) {
    switch (isa) {
        case Isa::scalar: return "scalar";
        case Isa::avx2: return "avx2";
    }
    return "?";
}

namespace {

Isa detect_best() {
    if (cpu_supports(Isa::avx2)) return Isa::avx2;
    return Isa::scalar;
}

std::atomic<Isa> g_isa{detect_best()};

const FloatKernels& table_for(Isa isa) {
#ifdef REAPS_HAVE_AVX2
    if (isa == Isa::avx2) return kAvx2Table;
#else
    (void)isa;
#endif
    return kScalarTable;
}

const FloatKernels& tab() { return table_for(g_isa.load(std::memory_order_relaxed)); }

}  // namespace

Isa active_isa() { return g_isa.load(std::memory_order_relaxed); }

void set_isa(Isa isa) {
    if (!cpu_supports(isa))
        throw Error(std::string("isa not supported on this cpu: ") + isa_name(isa));
    g_isa.store(isa, std::memory_order_relaxed);
}

// ----------------------------------------------------------- float frontends

double dot(const float* a, const float* b, std::size_t n) { return tab().dot(a, b, n); }
double sum(const float* x, std::size_t n) { return tab().sum(x, n); }
void axpy_acc(double* acc, float a, const float* x, std::size_t n) { tab().axpy_acc(acc, a, x, n); }
void relu(const float* x, float* y, std::size_t n) { tab().relu(x, y, n); }
void relu_bwd(const float* x, const float* gy, float* gx, std::size_t n) { tab().relu_bwd(x, gy, gx, n); }
void add(const float* a, const float* b, float* y, std::size_t n) { tab().add(a, b, y, n); }
void mul(const float* a, const float* b, float* y, std::size_t n) { tab().mul(a, b, y, n); }
void scale(const float* x, float s, float* y, std::size_t n) { tab().scale(x, s, y, n); }

// ------------------------------------------------- double path (scalar only)

double dot(const double* a, const double* b, std::size_t n) {
    double l[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    for (std::size_t k = 0; k < n; ++k) l[k & 7] += a[k] * b[k];
    return ((l[0] + l[1]) + (l[2] + l[3])) + ((l[4] + l[5]) + (l[6] + l[7]));
}

double sum(const double* x, std::size_t n) {
    double l[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    for (std::size_t k = 0; k < n; ++k) l[k & 7] += x[k];
    return ((l[0] + l[1]) + (l[2] + l[3])) + ((l[4] + l[5]) + (l[6] + l[7]));
}

void axpy_acc(double* acc, double a, const double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) acc[i] += a * x[i];
}

void relu(const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_bwd(const double* x, const double* gy, double* gx, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        if (x[i] > 0.0) gx[i] += gy[i];
}

void add(const double* a, const double* b, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

void mul(const double* a, const double* b, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

void scale(const double* x, double s, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = s * x[i];
}

}  // namespace reaps::kern
