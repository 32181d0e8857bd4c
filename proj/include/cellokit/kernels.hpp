#pragma once

#include <cstddef>
#include <span>
#include <string_view>

/**
 * @file kernels.hpp
 *
 * @brief Data-parallel inner loops with a scalar reference and SIMD variants.
 *
 * Every variant computes the same quantity; they differ only in summation
 * order (lane-wise partial sums) and in fused multiply-add rounding, so
 * results agree to a few ulps rather than bit-for-bit. A single process
 * always uses one variant, which keeps runs reproducible on a given machine.
 *
 * The variant is chosen once at first use from the CPU features, and can be
 * pinned with the environment variable `CELLOKIT_ISA=scalar|avx2` or with
 * `force_isa()`.
 */

namespace cellokit::kernels {

enum class Isa { Scalar, Avx2 };

std::string_view to_string(Isa isa);

struct KernelTable {
    /// sum_i a[i] * b[i]
    double (*dot)(const double* a, const double* b, std::size_t n);
    /// y[i] += alpha * x[i]
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    /// sum_i (a[i] - b[i])^2
    double (*squared_distance)(const double* a, const double* b, std::size_t n);
    /// C[i, j] (+)= sum_k A[i, k] * B[j, k]; A is m x k, B is n x k, C is m x n, all row-major.
    void (*gemm_nt)(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k, bool accumulate);
    /// C[i, j] += sum_p A[i, p] * B[p, j]; A is m x k, B is k x n.
    void (*gemm_nn_acc)(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k);
    /// C[i, j] += sum_p A[p, i] * B[p, j]; A is k x m, B is k x n.
    void (*gemm_tn_acc)(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k);
};

const KernelTable& scalar_table();

/// Null when the build has no AVX2 translation unit (non-x86 targets).
const KernelTable* avx2_table();

bool isa_supported(Isa isa);

/// Table for the active variant.
const KernelTable& active();

Isa active_isa();

/// Pins the active variant. Throws `Error(InvalidArgument)` if unsupported.
void force_isa(Isa isa);

const KernelTable& table(Isa isa);

inline double dot(std::span<const double> a, std::span<const double> b) {
    return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    active().axpy(alpha, x.data(), y.data(), x.size());
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    return active().squared_distance(a.data(), b.data(), a.size());
}

} // namespace cellokit::kernels
