#include <doctest.h>

#include <cstring>
#include <vector>

#include "kformer/kernels.hpp"
#include "kformer/rng.hpp"

using kformer::SplitMix64;
namespace kernels = kformer::kernels;

namespace {

std::vector<double> random_vec(SplitMix64& rng, int64_t n) {
    std::vector<double> v(static_cast<size_t>(n));
    for (double& x : v) x = rng.next_normal();
    return v;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("matmul serial and omp flavors agree bit for bit") {
    SplitMix64 rng(11);
    // sizes straddling the parallel dispatch threshold, including degenerate ones
    const int64_t dims[][3] = {{1, 1, 1},  {3, 5, 2},   {12, 64, 256}, {64, 64, 64},
                               {7, 33, 9}, {0, 4, 5},   {4, 0, 5},     {4, 5, 0},
                               {128, 17, 128}};
    for (const auto& d : dims) {
        const int64_t m = d[0], k = d[1], n = d[2];
        CAPTURE(m);
        CAPTURE(k);
        CAPTURE(n);
        const auto a = random_vec(rng, m * k);
        const auto b_nn = random_vec(rng, k * n);
        std::vector<double> cs(static_cast<size_t>(m * n)), cp(static_cast<size_t>(m * n));

        kernels::matmul_nn_serial(a.data(), b_nn.data(), cs.data(), m, k, n);
        kernels::matmul_nn_omp(a.data(), b_nn.data(), cp.data(), m, k, n);
        CHECK(bit_equal(cs, cp));

        const auto b_nt = random_vec(rng, n * k);
        kernels::matmul_nt_serial(a.data(), b_nt.data(), cs.data(), m, k, n);
        kernels::matmul_nt_omp(a.data(), b_nt.data(), cp.data(), m, k, n);
        CHECK(bit_equal(cs, cp));

        const auto a_tn = random_vec(rng, k * m);
        kernels::matmul_tn_serial(a_tn.data(), b_nn.data(), cs.data(), m, k, n);
        kernels::matmul_tn_omp(a_tn.data(), b_nn.data(), cp.data(), m, k, n);
        CHECK(bit_equal(cs, cp));
    }
}

TEST_CASE("matmul variants agree with the plain definition") {
    SplitMix64 rng(12);
    const int64_t m = 6, k = 9, n = 4;
    const auto a = random_vec(rng, m * k);
    const auto b = random_vec(rng, k * n);

    std::vector<double> c_nn(static_cast<size_t>(m * n));
    kernels::matmul_nn_serial(a.data(), b.data(), c_nn.data(), m, k, n);

    // B^T laid out as [n x k], A^T as [k x m]
    std::vector<double> bt(static_cast<size_t>(n * k)), at(static_cast<size_t>(k * m));
    for (int64_t i = 0; i < k; ++i)
        for (int64_t j = 0; j < n; ++j) bt[static_cast<size_t>(j * k + i)] = b[static_cast<size_t>(i * n + j)];
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < k; ++j) at[static_cast<size_t>(j * m + i)] = a[static_cast<size_t>(i * k + j)];

    std::vector<double> c_nt(static_cast<size_t>(m * n)), c_tn(static_cast<size_t>(m * n));
    kernels::matmul_nt_serial(a.data(), bt.data(), c_nt.data(), m, k, n);
    kernels::matmul_tn_serial(at.data(), b.data(), c_tn.data(), m, k, n);
    for (size_t i = 0; i < c_nn.size(); ++i) {
        CHECK(c_nt[i] == doctest::Approx(c_nn[i]).epsilon(1e-12));
        CHECK(c_tn[i] == doctest::Approx(c_nn[i]).epsilon(1e-12));
    }
}

TEST_CASE("gelu flavors agree bit for bit and hit known values") {
    SplitMix64 rng(13);
    const auto x = random_vec(rng, 40000);  // above the parallel threshold
    std::vector<double> ys(x.size()), yp(x.size());
    kernels::gelu_serial(x.data(), ys.data(), static_cast<int64_t>(x.size()));
    kernels::gelu_omp(x.data(), yp.data(), static_cast<int64_t>(x.size()));
    CHECK(bit_equal(ys, yp));

    CHECK(kernels::gelu_scalar(0.0) == 0.0);
    CHECK(kernels::gelu_scalar(10.0) == doctest::Approx(10.0).epsilon(1e-6));
}
