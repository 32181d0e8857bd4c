#pragma once
// Independent reference computations shared by the unit and acceptance tests.
// None of them call into the library code they check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

/// Solves A x = b by Gaussian elimination with partial pivoting; A is n x n row-major.
inline std::vector<double> solve_dense(std::vector<double> a, std::vector<double> b) {
    const std::size_t n = b.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r) {
            if (std::abs(a[r * n + col]) > std::abs(a[piv * n + col])) piv = r;
        }
        if (piv != col) {
            for (std::size_t c = 0; c < n; ++c) std::swap(a[col * n + c], a[piv * n + c]);
            std::swap(b[col], b[piv]);
        }
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a[r * n + col] / a[col * n + col];
            if (f == 0.0) continue;
            for (std::size_t c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n);
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t c = i + 1; c < n; ++c) s -= a[i * n + c] * x[c];
        x[i] = s / a[i * n + i];
    }
    return x;
}

/// PPR as the solution of (I - d W) p = (1 - d) e_source with W built from an undirected adjacency list.
/// Isolated nodes route their mass to the source.
inline std::vector<double> ppr_dense(const std::vector<std::vector<std::size_t>>& adj, std::size_t source, double d) {
    const std::size_t n = adj.size();
    std::vector<double> a(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) a[i * n + i] = 1.0;
    for (std::size_t u = 0; u < n; ++u) {
        if (adj[u].empty()) {
            a[source * n + u] -= d;
            continue;
        }
        for (std::size_t v : adj[u]) a[v * n + u] -= d / static_cast<double>(adj[u].size());
    }
    std::vector<double> b(n, 0.0);
    b[source] = 1.0 - d;
    return solve_dense(std::move(a), std::move(b));
}

/// Modularity from the definition: sum over pairs in the same community of A_ij - gamma k_i k_j / 2m, over 2m.
inline double modularity_direct(const std::vector<std::vector<double>>& a, const std::vector<std::size_t>& comm, double gamma) {
    const std::size_t n = a.size();
    std::vector<double> k(n, 0.0);
    double m2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) k[i] += a[i][j];
        m2 += k[i];
    }
    double q = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (comm[i] == comm[j]) q += a[i][j] - gamma * k[i] * k[j] / m2;
        }
    }
    return q / m2;
}

/// Visits every set partition of {0..n-1} as a restricted growth string.
inline void for_each_partition(std::size_t n, const std::function<void(const std::vector<std::size_t>&)>& visit) {
    std::vector<std::size_t> rgs(n, 0);
    std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t i, std::size_t max_used) {
        if (i == n) {
            visit(rgs);
            return;
        }
        for (std::size_t c = 0; c <= max_used + 1; ++c) {
            rgs[i] = c;
            rec(i + 1, std::max(max_used, c));
        }
    };
    if (n == 0) return;
    rgs[0] = 0;
    rec(1, 0);
}

} // namespace oracle
