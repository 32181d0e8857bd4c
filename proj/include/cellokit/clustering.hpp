#pragma once

#include "cellokit/autodiff.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace cellokit::clustering {

/// Directed, unweighted k-nearest-neighbour graph.
struct KnnGraph {
    std::size_t n = 0;
    std::size_t k = 0;
    /// `neighbors[i]` lists the out-neighbours of i, nearest first.
    std::vector<std::vector<std::size_t>> neighbors;
};

/**
 * Exact Euclidean kNN over the rows of `points`. Each node gets min(k, n - 1)
 * out-neighbours; equal distances go to the lower index.
 * Throws Error(DegenerateInput) for n < 2 and Error(InvalidArgument) for k = 0.
 */
KnnGraph knn_graph(const ad::Matrix& points, std::size_t k);

/**
 * Symmetric weighted graph. `adj[i]` holds (j, A_ij) sorted by j, with
 * A_ij = A_ji. A diagonal entry A_ii contributes once to the degree of i,
 * which is the convention that makes aggregation exact.
 */
struct WeightedGraph {
    std::size_t n = 0;
    std::vector<std::vector<std::pair<std::size_t, double>>> adj;

    double degree(std::size_t i) const;
    /// Sum of all A_ij, i.e. twice the total edge weight.
    double total_weight() const;
};

/// A_ij = number of directions in which i and j are kNN neighbours (0, 1 or 2).
WeightedGraph symmetrize(const KnnGraph& knn);

/// From an undirected edge list, each edge weighted 1 (used for fixtures).
WeightedGraph from_edges(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges);

/// Q = (1/2m) sum_ij [A_ij - gamma k_i k_j / 2m] delta(c_i, c_j); 0 for an edgeless graph.
double modularity(const WeightedGraph& graph, const std::vector<std::size_t>& assignment, double resolution);

struct Partition {
    /// Community of every node; ids are dense and numbered by first occurrence.
    std::vector<std::size_t> assignment;
    std::size_t n_communities = 0;
    double resolution = 1.0;
    double modularity = 0.0;
    /// Modularity after each aggregation level; non-decreasing.
    std::vector<double> trace;
};

/**
 * Louvain: repeated local-move passes in a seeded random node order (a node
 * moves only for a strictly positive gain), then aggregation of communities
 * into nodes, until a level makes no move.
 */
Partition louvain(const WeightedGraph& graph, double resolution, std::uint64_t seed = 0);
Partition louvain(const KnnGraph& knn, double resolution, std::uint64_t seed = 0);

/// 0.1, 0.2, ..., 2.0
std::vector<double> sweep_resolutions();

struct SweepResult {
    Partition best;
    double best_nmi = 0.0;
    std::vector<std::pair<double, double>> nmi_by_resolution;
};

/// Louvain at every sweep resolution; keeps the highest NMI against `labels`, the lowest resolution on ties.
SweepResult sweep(const KnnGraph& knn, const std::vector<std::size_t>& labels, std::uint64_t seed = 0);
SweepResult sweep(const ad::Matrix& points, const std::vector<std::size_t>& labels, std::size_t k = 15, std::uint64_t seed = 0);

/// "cell_id<TAB>community" lines.
std::string format_partition(const std::vector<std::string>& cell_ids, const Partition& partition);

} // namespace cellokit::clustering
