// Throughput comparison of the serial reference kernels against the OpenMP
// flavors, plus a bit-equality spot check at each size.

#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <vector>

#include <omp.h>

#include "kformer/kernels.hpp"
#include "kformer/rng.hpp"

using kformer::SplitMix64;
namespace kernels = kformer::kernels;

namespace {

using MatmulFn = void (*)(const double*, const double*, double*, int64_t, int64_t, int64_t);

double time_matmul(MatmulFn fn, const std::vector<double>& a, const std::vector<double>& b,
                   std::vector<double>& c, int64_t n, int reps) {
    fn(a.data(), b.data(), c.data(), n, n, n);  // warm up
    const auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < reps; ++r) fn(a.data(), b.data(), c.data(), n, n, n);
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(t1 - t0).count() / reps;
}

}  // namespace

int main() {
    std::printf("threads: %d\n", omp_get_max_threads());
    std::printf("%-10s %8s %12s %12s %8s %6s\n", "kernel", "n", "serial", "omp", "speedup",
                "equal");

    SplitMix64 rng(7);
    for (int64_t n : {64, 128, 256, 512}) {
        std::vector<double> a(static_cast<size_t>(n * n)), b(static_cast<size_t>(n * n));
        for (double& v : a) v = rng.next_normal();
        for (double& v : b) v = rng.next_normal();
        std::vector<double> c_serial(static_cast<size_t>(n * n));
        std::vector<double> c_omp(static_cast<size_t>(n * n));

        const int reps = n <= 128 ? 20 : 5;
        const double flops = 2.0 * static_cast<double>(n) * n * n;

        const double ts = time_matmul(&kernels::matmul_nn_serial, a, b, c_serial, n, reps);
        const double tp = time_matmul(&kernels::matmul_nn_omp, a, b, c_omp, n, reps);
        const bool equal =
            std::memcmp(c_serial.data(), c_omp.data(), c_serial.size() * sizeof(double)) == 0;
        std::printf("%-10s %8" PRId64 " %9.2f ms %9.2f ms %7.2fx %6s  (%.2f vs %.2f GFLOP/s)\n",
                    "matmul_nn", n, ts * 1e3, tp * 1e3, ts / tp, equal ? "yes" : "NO",
                    flops / ts * 1e-9, flops / tp * 1e-9);
    }

    for (int64_t n : {1 << 16, 1 << 20}) {
        std::vector<double> x(static_cast<size_t>(n)), ys(static_cast<size_t>(n)),
            yp(static_cast<size_t>(n));
        for (double& v : x) v = rng.next_normal();
        const auto t0 = std::chrono::steady_clock::now();
        for (int r = 0; r < 20; ++r) kernels::gelu_serial(x.data(), ys.data(), n);
        const auto t1 = std::chrono::steady_clock::now();
        for (int r = 0; r < 20; ++r) kernels::gelu_omp(x.data(), yp.data(), n);
        const auto t2 = std::chrono::steady_clock::now();
        const double ts = std::chrono::duration<double>(t1 - t0).count() / 20;
        const double tp = std::chrono::duration<double>(t2 - t1).count() / 20;
        const bool equal = std::memcmp(ys.data(), yp.data(), ys.size() * sizeof(double)) == 0;
        std::printf("%-10s %8" PRId64 " %9.2f ms %9.2f ms %7.2fx %6s\n", "gelu", n, ts * 1e3,
                    tp * 1e3, ts / tp, equal ? "yes" : "NO");
    }
    return 0;
}
