#include "kformer/kernels.hpp"

#include <cmath>

namespace kformer::kernels {

namespace {
// Below this many multiply-adds the fork/join overhead dominates.
constexpr int64_t kParallelMinWork = 1 << 15;

constexpr double kGeluC0 = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluC1 = 0.044715;
}  // namespace

// Reference form: one dot product per output element, straight from the
// definition. The omp flavors reorder loops for locality but keep the
// per-element accumulation order over p, so they match bit for bit.
void matmul_nn_serial(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int64_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
            c[i * n + j] = acc;
        }
    }
}

void matmul_nn_omp(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (int64_t j = 0; j < n; ++j) crow[j] = 0.0;
        for (int64_t p = 0; p < k; ++p) {
            const double aip = a[i * k + p];
            const double* brow = b + p * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
}

void matmul_nn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    if (m * k * n >= kParallelMinWork)
        matmul_nn_omp(a, b, c, m, k, n);
    else
        matmul_nn_serial(a, b, c, m, k, n);
}

void matmul_nt_serial(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        for (int64_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double acc = 0.0;
            for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            c[i * n + j] = acc;
        }
    }
}

void matmul_nt_omp(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        for (int64_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double acc = 0.0;
            for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            c[i * n + j] = acc;
        }
    }
}

void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    if (m * k * n >= kParallelMinWork)
        matmul_nt_omp(a, b, c, m, k, n);
    else
        matmul_nt_serial(a, b, c, m, k, n);
}

void matmul_tn_serial(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int64_t p = 0; p < k; ++p) acc += a[p * m + i] * b[p * n + j];
            c[i * n + j] = acc;
        }
    }
}

void matmul_tn_omp(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (int64_t j = 0; j < n; ++j) crow[j] = 0.0;
        for (int64_t p = 0; p < k; ++p) {
            const double api = a[p * m + i];
            const double* brow = b + p * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += api * brow[j];
        }
    }
}

void matmul_tn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    if (m * k * n >= kParallelMinWork)
        matmul_tn_omp(a, b, c, m, k, n);
    else
        matmul_tn_serial(a, b, c, m, k, n);
}

double gelu_scalar(double x) {
    const double u = kGeluC0 * (x + kGeluC1 * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_grad_scalar(double x) {
    const double u = kGeluC0 * (x + kGeluC1 * x * x * x);
    const double t = std::tanh(u);
    const double du = kGeluC0 * (1.0 + 3.0 * kGeluC1 * x * x);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

void gelu_serial(const double* x, double* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] = gelu_scalar(x[i]);
}

void gelu_omp(const double* x, double* y, int64_t n) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) y[i] = gelu_scalar(x[i]);
}

void gelu(const double* x, double* y, int64_t n) {
    if (n >= kParallelMinWork)
        gelu_omp(x, y, n);
    else
        gelu_serial(x, y, n);
}

void gelu_backward_serial(const double* x, const double* g, double* dx, int64_t n) {
    for (int64_t i = 0; i < n; ++i) dx[i] += g[i] * gelu_grad_scalar(x[i]);
}

void gelu_backward_omp(const double* x, const double* g, double* dx, int64_t n) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) dx[i] += g[i] * gelu_grad_scalar(x[i]);
}

void gelu_backward(const double* x, const double* g, double* dx, int64_t n) {
    if (n >= kParallelMinWork)
        gelu_backward_omp(x, g, dx, n);
    else
        gelu_backward_serial(x, g, dx, n);
}

}  // namespace kformer::kernels
