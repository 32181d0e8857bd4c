#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace cellokit::ontology {

/**
 * @brief Cell-type taxonomy with "is a subtype of" edges.
 *
 * Edges are stored as (child, parent) node indices and must form a DAG.
 * The undirected view used for random walks treats every edge as a
 * symmetric link; `neighbors()` lists it sorted and without duplicates.
 * Node indices follow first-appearance order.
 */
class OntologyGraph {
public:
    OntologyGraph() = default;

    /**
     * Builds and validates a graph.
     * `extra_nodes` allows isolated nodes, which an edge list cannot express.
     * Throws Error(SelfLoop | DuplicateEdge | CycleDetected).
     */
    static OntologyGraph from_edges(const std::vector<std::pair<std::string, std::string>>& edges,
                                    const std::vector<std::string>& extra_nodes = {});

    /**
     * Parses "child<TAB>parent" lines (any whitespace separates the two ids).
     * Blank lines and lines starting with '#' are skipped.
     * Throws Error(MalformedLine) with the 1-based line number, plus the
     * validation errors of `from_edges()`.
     */
    static OntologyGraph parse(std::string_view text);

    std::size_t size() const { return nodes_.size(); }
    const std::vector<std::string>& nodes() const { return nodes_; }
    const std::string& name(std::size_t node) const { return nodes_.at(node); }

    std::optional<std::size_t> find(std::string_view id) const;
    /// Throws Error(UnknownNode).
    std::size_t index(std::string_view id) const;

    /// (child, parent) pairs in input order.
    const std::vector<std::pair<std::size_t, std::size_t>>& edges() const { return edges_; }
    const std::vector<std::size_t>& parents(std::size_t node) const { return parents_.at(node); }
    const std::vector<std::size_t>& neighbors(std::size_t node) const { return neighbors_.at(node); }
    bool adjacent(std::size_t u, std::size_t v) const;

private:
    std::vector<std::string> nodes_;
    std::unordered_map<std::string, std::size_t> lookup_;
    std::vector<std::pair<std::size_t, std::size_t>> edges_;
    std::vector<std::vector<std::size_t>> parents_;
    std::vector<std::vector<std::size_t>> neighbors_;
};

struct PprOptions {
    /// Probability of following an edge; 1 - damping is the teleport probability.
    double damping = 0.9;
    /// L1 change between iterates at which iteration stops.
    double tolerance = 1e-10;
    std::size_t max_iters = 10000;
};

struct PprVector {
    std::size_t source = 0;
    std::vector<double> scores;
    double damping = 0.9;
    double tolerance = 1e-10;
    std::size_t iterations = 0;
    double residual = 0.0;
};

/**
 * Personalized PageRank from `source` on the undirected view, by power
 * iteration of p <- (1 - d) e_source + d W p with W the column-stochastic
 * random-walk matrix. Nodes without neighbours send their mass back to the
 * source.
 *
 * Throws Error(UnknownNode), Error(InvalidArgument) for damping outside (0, 1),
 * and Error(NoConvergence) carrying the last residual.
 */
PprVector compute_ppr(const OntologyGraph& graph, std::size_t source, const PprOptions& options = {});
PprVector compute_ppr(const OntologyGraph& graph, std::string_view source, const PprOptions& options = {});

inline constexpr double default_similarity_threshold = 1e-4;

/**
 * Integer structural similarity level: floor(log2(ppr / s + 1)) when
 * ppr >= s, otherwise 1. Always >= 1 and non-decreasing in `ppr`.
 */
int transform_similarity(double ppr, double threshold);

/// PPR and similarity levels over a subset of nodes, keyed by graph node index.
class SimilarityTable {
public:
    SimilarityTable() = default;
    SimilarityTable(std::vector<std::size_t> nodes, std::vector<double> ppr, double threshold);

    const std::vector<std::size_t>& nodes() const { return nodes_; }
    double threshold() const { return threshold_; }
    bool contains(std::size_t node) const { return position_.count(node) != 0; }

    /// sim(u, v) for graph node indices; throws Error(MissingSimilarity).
    int level(std::size_t u, std::size_t v) const;
    /// PPR(u, v): the walk starts at u and is scored at v.
    double ppr(std::size_t u, std::size_t v) const;

    /// "u<TAB>v<TAB>level<TAB>ppr" lines, row-major over `nodes()`.
    std::string to_tsv(const OntologyGraph& graph) const;

private:
    std::size_t slot(std::size_t u, std::size_t v) const;

    std::vector<std::size_t> nodes_;
    std::unordered_map<std::size_t, std::size_t> position_;
    std::vector<double> ppr_;
    std::vector<int> levels_;
    double threshold_ = default_similarity_threshold;
};

SimilarityTable build_similarity_table(const OntologyGraph& graph, const std::vector<std::size_t>& subset,
                                       const PprOptions& options = {}, double threshold = default_similarity_threshold);

/// Strict ancestors of `node` along (child -> parent) edges, sorted.
std::vector<std::size_t> ancestors(const OntologyGraph& graph, std::size_t node);

class AncestorSets {
public:
    AncestorSets() = default;
    explicit AncestorSets(const OntologyGraph& graph);

    const std::vector<std::size_t>& of(std::size_t node) const { return sets_.at(node); }
    bool is_ancestor(std::size_t candidate, std::size_t node) const;

private:
    std::vector<std::vector<std::size_t>> sets_;
};

/**
 * Negative sample indices for the (target i, positive j) pair of a batch:
 * every k != i with sim(c_i, c_j) > sim(c_i, c_k), minus cells whose type is
 * an ancestor of c_i. `batch_types` holds graph node indices.
 */
std::vector<std::size_t> negative_set(std::size_t i, std::size_t j, const std::vector<std::size_t>& batch_types,
                                      const SimilarityTable& table, const AncestorSets& anc);

} // namespace cellokit::ontology
