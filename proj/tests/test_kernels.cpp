#include "cellokit/error.hpp"
#include "cellokit/kernels.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <tuple>
#include <vector>

using namespace cellokit;

namespace {

std::vector<double> random_vec(std::mt19937_64& rng, std::size_t n) {
    std::normal_distribution<double> d;
    std::vector<double> v(n);
    for (double& x : v) x = d(rng);
    return v;
}

// Reference values computed with plain loops, independent of both variants.
double naive_dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

void check_table(const kernels::KernelTable& kt) {
    std::mt19937_64 rng(11);
    for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 9u, 15u, 16u, 33u, 100u}) {
        const auto a = random_vec(rng, n), b = random_vec(rng, n);
        CHECK(kt.dot(a.data(), b.data(), n) == doctest::Approx(naive_dot(a, b)).epsilon(1e-12));
        double sq = 0.0;
        for (std::size_t i = 0; i < n; ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
        CHECK(kt.squared_distance(a.data(), b.data(), n) == doctest::Approx(sq).epsilon(1e-12));
        auto y = b;
        kt.axpy(0.5, a.data(), y.data(), n);
        for (std::size_t i = 0; i < n; ++i) CHECK(y[i] == doctest::Approx(b[i] + 0.5 * a[i]).epsilon(1e-14));
    }
    for (auto [m, n, k] : {std::tuple{1u, 1u, 1u}, std::tuple{3u, 5u, 7u}, std::tuple{8u, 4u, 16u}, std::tuple{9u, 13u, 11u}}) {
        const auto a = random_vec(rng, m * k), b = random_vec(rng, n * k), bt = random_vec(rng, k * n), at = random_vec(rng, k * m);
        std::vector<double> c(m * n, 1.0);
        kt.gemm_nt(a.data(), b.data(), c.data(), m, n, k, false);
        std::vector<double> c_acc(m * n, 1.0);
        kt.gemm_nt(a.data(), b.data(), c_acc.data(), m, n, k, true);
        std::vector<double> nn(m * n, 2.0), tn(m * n, -1.0);
        kt.gemm_nn_acc(a.data(), bt.data(), nn.data(), m, n, k);
        kt.gemm_tn_acc(at.data(), bt.data(), tn.data(), m, n, k);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                double s_nt = 0.0, s_nn = 0.0, s_tn = 0.0;
                for (std::size_t p = 0; p < k; ++p) {
                    s_nt += a[i * k + p] * b[j * k + p];
                    s_nn += a[i * k + p] * bt[p * n + j];
                    s_tn += at[p * m + i] * bt[p * n + j];
                }
                CHECK(c[i * n + j] == doctest::Approx(s_nt).epsilon(1e-12));
                CHECK(c_acc[i * n + j] == doctest::Approx(s_nt + 1.0).epsilon(1e-12));
                CHECK(nn[i * n + j] == doctest::Approx(s_nn + 2.0).epsilon(1e-12));
                CHECK(tn[i * n + j] == doctest::Approx(s_tn - 1.0).epsilon(1e-12));
            }
        }
    }
}

} // namespace

TEST_CASE("scalar kernels match naive loops") { check_table(kernels::scalar_table()); }

TEST_CASE("avx2 kernels match naive loops and the scalar variant") {
    if (!kernels::isa_supported(kernels::Isa::Avx2)) {
        MESSAGE("AVX2 unavailable on this machine; equivalence not exercised");
        return;
    }
    const auto& simd = *kernels::avx2_table();
    check_table(simd);
    std::mt19937_64 rng(12);
    const auto& ref = kernels::scalar_table();
    for (std::size_t n = 0; n < 70; ++n) {
        const auto a = random_vec(rng, n), b = random_vec(rng, n);
        double scale = 0.0;
        for (std::size_t i = 0; i < n; ++i) scale += std::abs(a[i] * b[i]);
        // Reassociation error is bounded by n ulps of the absolute sum.
        CHECK(std::abs(simd.dot(a.data(), b.data(), n) - ref.dot(a.data(), b.data(), n)) <= 4.0 * n * 1.2e-16 * scale + 1e-300);
    }
}

TEST_CASE("force_isa pins the active table") {
    const auto before = kernels::active_isa();
    kernels::force_isa(kernels::Isa::Scalar);
    CHECK(kernels::active_isa() == kernels::Isa::Scalar);
    CHECK(&kernels::active() == &kernels::scalar_table());
    if (kernels::isa_supported(kernels::Isa::Avx2)) {
        kernels::force_isa(kernels::Isa::Avx2);
        CHECK(kernels::active_isa() == kernels::Isa::Avx2);
    } else {
        CHECK_THROWS_AS(kernels::force_isa(kernels::Isa::Avx2), Error);
    }
    kernels::force_isa(before);
}
