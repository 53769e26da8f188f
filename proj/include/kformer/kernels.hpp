#pragma once

#include <cstdint>

// Data-parallel inner loops of the model math. Each kernel comes in a serial
// reference flavor and an OpenMP flavor; both accumulate each output element
// in the same index order, so results are identical bit for bit and the
// serial flavor doubles as the test oracle for the parallel one.
// bench/kernels_bench.cpp compares their throughput.
namespace kformer::kernels {

// C[m x n] = A[m x k] * B[k x n]
void matmul_nn_serial(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void matmul_nn_omp(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void matmul_nn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);

// C[m x n] = A[m x k] * B[n x k]^T
void matmul_nt_serial(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void matmul_nt_omp(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);

// C[m x n] = A[k x m]^T * B[k x n]
void matmul_tn_serial(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void matmul_tn_omp(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void matmul_tn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);

// GeLU via the tanh approximation 0.5*x*(1 + tanh(sqrt(2/pi)*(x + 0.044715*x^3))).
double gelu_scalar(double x);
double gelu_grad_scalar(double x);
void gelu_serial(const double* x, double* y, int64_t n);
void gelu_omp(const double* x, double* y, int64_t n);
void gelu(const double* x, double* y, int64_t n);
void gelu_backward_serial(const double* x, const double* g, double* dx, int64_t n);
void gelu_backward_omp(const double* x, const double* g, double* dx, int64_t n);
void gelu_backward(const double* x, const double* g, double* dx, int64_t n);

}  // namespace kformer::kernels
