#include "cellokit/clustering.hpp"
#include "cellokit/error.hpp"
#include "cellokit/kernels.hpp"
#include "cellokit/metrics.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <random>

namespace cellokit::clustering {

KnnGraph knn_graph(const ad::Matrix& points, std::size_t k) {
    const std::size_t n = points.rows;
    if (n < 2) {
        throw Error(ErrorKind::DegenerateInput, "kNN graph needs at least 2 points, got " + std::to_string(n));
    }
    if (k == 0) {
        throw Error(ErrorKind::InvalidArgument, "k must be at least 1");
    }
    const auto& kt = kernels::active();
    const std::size_t kk = std::min(k, n - 1);
    KnnGraph g{n, k, std::vector<std::vector<std::size_t>>(n)};
    std::vector<std::pair<double, std::size_t>> cand;
    cand.reserve(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        cand.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) {
                cand.emplace_back(kt.squared_distance(points.row(i).data(), points.row(j).data(), points.cols), j);
            }
        }
        std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(kk), cand.end());
        auto& out = g.neighbors[i];
        out.reserve(kk);
        for (std::size_t r = 0; r < kk; ++r) {
            out.push_back(cand[r].second);
        }
    }
    return g;
}

double WeightedGraph::degree(std::size_t i) const {
    double d = 0.0;
    for (const auto& [j, w] : adj[i]) {
        d += w;
    }
    return d;
}

double WeightedGraph::total_weight() const {
    double t = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        t += degree(i);
    }
    return t;
}

namespace {

WeightedGraph from_maps(const std::vector<std::map<std::size_t, double>>& rows) {
    WeightedGraph g;
    g.n = rows.size();
    g.adj.resize(g.n);
    for (std::size_t i = 0; i < g.n; ++i) {
        g.adj[i].assign(rows[i].begin(), rows[i].end());
    }
    return g;
}

} // namespace

WeightedGraph symmetrize(const KnnGraph& knn) {
    std::vector<std::map<std::size_t, double>> rows(knn.n);
    for (std::size_t i = 0; i < knn.n; ++i) {
        for (std::size_t j : knn.neighbors[i]) {
            rows[i][j] += 1.0;
            rows[j][i] += 1.0;
        }
    }
    return from_maps(rows);
}

WeightedGraph from_edges(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
    std::vector<std::map<std::size_t, double>> rows(n);
    for (const auto& [a, b] : edges) {
        if (a >= n || b >= n) {
            throw Error(ErrorKind::InvalidArgument, "edge endpoint out of range");
        }
        rows[a][b] += 1.0;
        if (a != b) {
            rows[b][a] += 1.0;
        }
    }
    return from_maps(rows);
}

double modularity(const WeightedGraph& graph, const std::vector<std::size_t>& assignment, double resolution) {
    if (assignment.size() != graph.n) {
        throw Error(ErrorKind::SizeMismatch, "assignment must cover every node");
    }
    const double m2 = graph.total_weight();
    if (m2 == 0.0) {
        return 0.0;
    }
    const std::size_t n_comm = graph.n == 0 ? 0 : *std::max_element(assignment.begin(), assignment.end()) + 1;
    std::vector<double> internal(n_comm, 0.0);
    std::vector<double> tot(n_comm, 0.0);
    for (std::size_t i = 0; i < graph.n; ++i) {
        for (const auto& [j, w] : graph.adj[i]) {
            tot[assignment[i]] += w;
            if (assignment[i] == assignment[j]) {
                internal[assignment[i]] += w;
            }
        }
    }
    double q = 0.0;
    for (std::size_t c = 0; c < n_comm; ++c) {
        q += internal[c] / m2 - resolution * (tot[c] / m2) * (tot[c] / m2);
    }
    return q;
}

namespace {

// Returns true if any node changed community.
bool local_moves(const WeightedGraph& g, double resolution, std::mt19937_64& rng, std::vector<std::size_t>& comm) {
    const std::size_t n = g.n;
    comm.resize(n);
    std::iota(comm.begin(), comm.end(), std::size_t{0});
    const double m2 = g.total_weight();
    if (m2 == 0.0) {
        return false;
    }
    std::vector<double> k(n);
    std::vector<double> tot(n);
    for (std::size_t i = 0; i < n; ++i) {
        k[i] = g.degree(i);
        tot[i] = k[i];
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<double> w_to(n, 0.0);
    std::vector<std::size_t> touched;
    bool any_move = false;
    bool moved = true;
    while (moved) {
        moved = false;
        for (std::size_t i : order) {
            const std::size_t old_c = comm[i];
            touched.clear();
            touched.push_back(old_c);
            for (const auto& [j, w] : g.adj[i]) {
                if (j == i) {
                    continue;
                }
                const std::size_t c = comm[j];
                if (std::find(touched.begin(), touched.end(), c) == touched.end()) {
                    touched.push_back(c);
                }
                w_to[c] += w;
            }
            tot[old_c] -= k[i];
            std::size_t best = old_c;
            double best_gain = w_to[old_c] - resolution * k[i] * tot[old_c] / m2;
            for (std::size_t c : touched) {
                const double gain = w_to[c] - resolution * k[i] * tot[c] / m2;
                if (gain > best_gain + 1e-12) {
                    best_gain = gain;
                    best = c;
                }
            }
            tot[best] += k[i];
            comm[i] = best;
            if (best != old_c) {
                moved = true;
                any_move = true;
            }
            for (std::size_t c : touched) {
                w_to[c] = 0.0;
            }
        }
    }
    return any_move;
}

std::size_t renumber(std::vector<std::size_t>& comm) {
    std::vector<std::size_t> remap(comm.size(), static_cast<std::size_t>(-1));
    std::size_t next = 0;
    for (auto& c : comm) {
        if (remap[c] == static_cast<std::size_t>(-1)) {
            remap[c] = next++;
        }
        c = remap[c];
    }
    return next;
}

WeightedGraph aggregate(const WeightedGraph& g, const std::vector<std::size_t>& comm, std::size_t n_comm) {
    std::vector<std::map<std::size_t, double>> rows(n_comm);
    for (std::size_t i = 0; i < g.n; ++i) {
        for (const auto& [j, w] : g.adj[i]) {
            rows[comm[i]][comm[j]] += w;
        }
    }
    return from_maps(rows);
}

} // namespace

Partition louvain(const WeightedGraph& graph, double resolution, std::uint64_t seed) {
    if (!(resolution > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "resolution must be positive");
    }
    Partition p;
    p.resolution = resolution;
    p.assignment.resize(graph.n);
    std::iota(p.assignment.begin(), p.assignment.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    WeightedGraph level = graph;
    std::vector<std::size_t> comm;
    p.trace.push_back(modularity(graph, p.assignment, resolution));
    while (local_moves(level, resolution, rng, comm)) {
        const std::size_t n_comm = renumber(comm);
        for (auto& a : p.assignment) {
            a = comm[a];
        }
        p.trace.push_back(modularity(graph, p.assignment, resolution));
        level = aggregate(level, comm, n_comm);
    }
    p.n_communities = renumber(p.assignment);
    p.modularity = modularity(graph, p.assignment, resolution);
    return p;
}

Partition louvain(const KnnGraph& knn, double resolution, std::uint64_t seed) {
    return louvain(symmetrize(knn), resolution, seed);
}

std::vector<double> sweep_resolutions() {
    std::vector<double> r;
    for (int i = 1; i <= 20; ++i) {
        r.push_back(i / 10.0);
    }
    return r;
}

SweepResult sweep(const KnnGraph& knn, const std::vector<std::size_t>& labels, std::uint64_t seed) {
    if (labels.size() != knn.n) {
        throw Error(ErrorKind::LengthMismatch, "one label per node required");
    }
    const WeightedGraph g = symmetrize(knn);
    SweepResult out;
    bool first = true;
    for (double r : sweep_resolutions()) {
        Partition p = louvain(g, r, seed);
        const double score = metrics::nmi(p.assignment, labels);
        out.nmi_by_resolution.emplace_back(r, score);
        if (first || score > out.best_nmi) {
            out.best = std::move(p);
            out.best_nmi = score;
            first = false;
        }
    }
    return out;
}

SweepResult sweep(const ad::Matrix& points, const std::vector<std::size_t>& labels, std::size_t k, std::uint64_t seed) {
    return sweep(knn_graph(points, k), labels, seed);
}

std::string format_partition(const std::vector<std::string>& cell_ids, const Partition& partition) {
    if (cell_ids.size() != partition.assignment.size()) {
        throw Error(ErrorKind::SizeMismatch, "one cell id per node required");
    }
    std::string out;
    for (std::size_t i = 0; i < cell_ids.size(); ++i) {
        out += cell_ids[i] + '\t' + std::to_string(partition.assignment[i]) + '\n';
    }
    return out;
}

} // namespace cellokit::clustering
