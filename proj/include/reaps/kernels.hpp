#pragma once

#include <cstddef>

// Data-parallel inner-loop kernels behind the tensor primitives.
//
// Every float kernel has a scalar reference implementation and may have SIMD
// variants selected at runtime. Variants are bit-identical to the reference:
// reductions run 8 independent double accumulators in a fixed lane order
// (lane j sums elements with index % 8 == j) and combine them as
// ((l0+l1)+(l2+l3)) + ((l4+l5)+(l6+l7)); elementwise kernels have no ordering
// freedom at all. Products are formed in double after exact float->double
// widening, so no fused multiply-add ambiguity exists either.
//
// The double overloads back the gradient-check path; they use the same lane
// order but are not dispatched (scalar only).

namespace reaps::kern {

enum class Isa { scalar, avx2 };

bool cpu_supports(Isa isa);
Isa active_isa();
void set_isa(Isa isa);  // throws reaps::Error if unsupported on this CPU
const char* isa_name(Isa isa);

// sum_k a[k]*b[k], double accumulation, fixed lane order
double dot(const float* a, const float* b, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);

// sum_k x[k], double accumulation, fixed lane order
double sum(const float* x, std::size_t n);
double sum(const double* x, std::size_t n);

// acc[i] += a * x[i] (elementwise, no reduction)
void axpy_acc(double* acc, float a, const float* x, std::size_t n);
void axpy_acc(double* acc, double a, const double* x, std::size_t n);

// y[i] = max(x[i], 0)
void relu(const float* x, float* y, std::size_t n);
void relu(const double* x, double* y, std::size_t n);

// gx[i] += gy[i] where x[i] > 0
void relu_bwd(const float* x, const float* gy, float* gx, std::size_t n);
void relu_bwd(const double* x, const double* gy, double* gx, std::size_t n);

// y[i] = a[i] + b[i]
void add(const float* a, const float* b, float* y, std::size_t n);
void add(const double* a, const double* b, double* y, std::size_t n);

// y[i] = a[i] * b[i]
void mul(const float* a, const float* b, float* y, std::size_t n);
void mul(const double* a, const double* b, double* y, std::size_t n);

// y[i] = s * x[i]
void scale(const float* x, float s, float* y, std::size_t n);
void scale(const double* x, double s, double* y, std::size_t n);

}  // namespace reaps::kern
