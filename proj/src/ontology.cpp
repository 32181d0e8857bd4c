#include "cellokit/ontology.hpp"
#include "cellokit/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <set>
#include <sstream>

namespace cellokit::ontology {

OntologyGraph OntologyGraph::from_edges(const std::vector<std::pair<std::string, std::string>>& edges,
                                        const std::vector<std::string>& extra_nodes) {
    OntologyGraph g;
    auto intern = [&g](const std::string& id) {
        auto it = g.lookup_.find(id);
        if (it != g.lookup_.end()) {
            return it->second;
        }
        const std::size_t idx = g.nodes_.size();
        g.nodes_.push_back(id);
        g.lookup_.emplace(id, idx);
        return idx;
    };

    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const auto& [child, parent] : edges) {
        if (child == parent) {
            throw Error(ErrorKind::SelfLoop, "node " + child + " is its own parent");
        }
        const std::size_t c = intern(child);
        const std::size_t p = intern(parent);
        if (!seen.emplace(c, p).second) {
            throw Error(ErrorKind::DuplicateEdge, child + " -> " + parent);
        }
        g.edges_.emplace_back(c, p);
    }
    for (const auto& id : extra_nodes) {
        intern(id);
    }

    const std::size_t n = g.nodes_.size();
    g.parents_.assign(n, {});
    g.neighbors_.assign(n, {});
    std::vector<std::size_t> pending_children(n, 0);
    std::vector<std::vector<std::size_t>> children(n);
    for (const auto& [c, p] : g.edges_) {
        g.parents_[c].push_back(p);
        children[p].push_back(c);
        g.neighbors_[c].push_back(p);
        g.neighbors_[p].push_back(c);
    }
    for (auto& nb : g.neighbors_) {
        std::sort(nb.begin(), nb.end());
        nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
    }

    // Kahn's algorithm from the leaves upwards.
    for (const auto& [c, p] : g.edges_) {
        ++pending_children[p];
    }
    std::deque<std::size_t> ready;
    for (std::size_t v = 0; v < n; ++v) {
        if (pending_children[v] == 0) {
            ready.push_back(v);
        }
    }
    std::size_t visited = 0;
    while (!ready.empty()) {
        const std::size_t v = ready.front();
        ready.pop_front();
        ++visited;
        for (std::size_t p : g.parents_[v]) {
            if (--pending_children[p] == 0) {
                ready.push_back(p);
            }
        }
    }
    if (visited != n) {
        std::string members;
        for (std::size_t v = 0; v < n && members.size() < 200; ++v) {
            if (pending_children[v] != 0) {
                members += (members.empty() ? "" : ", ") + g.nodes_[v];
            }
        }
        throw Error(ErrorKind::CycleDetected, "directed cycle through {" + members + "}");
    }
    return g;
}

OntologyGraph OntologyGraph::parse(std::string_view text) {
    std::vector<std::pair<std::string, std::string>> edges;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') {
            continue;
        }
        std::istringstream fields(line);
        std::string child, parent, extra;
        if (!(fields >> child >> parent) || (fields >> extra)) {
            throw Error(ErrorKind::MalformedLine, "line " + std::to_string(line_no) + ": expected two fields");
        }
        edges.emplace_back(std::move(child), std::move(parent));
    }
    return from_edges(edges);
}

std::optional<std::size_t> OntologyGraph::find(std::string_view id) const {
    auto it = lookup_.find(std::string(id));
    if (it == lookup_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::size_t OntologyGraph::index(std::string_view id) const {
    if (auto found = find(id)) {
        return *found;
    }
    throw Error(ErrorKind::UnknownNode, std::string(id));
}

bool OntologyGraph::adjacent(std::size_t u, std::size_t v) const {
    const auto& nb = neighbors_.at(u);
    return std::binary_search(nb.begin(), nb.end(), v);
}

PprVector compute_ppr(const OntologyGraph& graph, std::size_t source, const PprOptions& options) {
    const std::size_t n = graph.size();
    if (source >= n) {
        throw Error(ErrorKind::UnknownNode, "node index " + std::to_string(source));
    }
    if (!(options.damping > 0.0 && options.damping < 1.0)) {
        throw Error(ErrorKind::InvalidArgument, "damping must lie in (0, 1)");
    }
    const double d = options.damping;

    PprVector out;
    out.source = source;
    out.damping = d;
    out.tolerance = options.tolerance;
    std::vector<double> p(n, 0.0);
    std::vector<double> next(n, 0.0);
    p[source] = 1.0;

    for (std::size_t iter = 1; iter <= options.max_iters; ++iter) {
        std::fill(next.begin(), next.end(), 0.0);
        double to_source = 1.0 - d;
        for (std::size_t u = 0; u < n; ++u) {
            if (p[u] == 0.0) {
                continue;
            }
            const auto& nb = graph.neighbors(u);
            if (nb.empty()) {
                to_source += d * p[u];
                continue;
            }
            const double share = d * p[u] / static_cast<double>(nb.size());
            for (std::size_t v : nb) {
                next[v] += share;
            }
        }
        next[source] += to_source;
        double change = 0.0;
        for (std::size_t v = 0; v < n; ++v) {
            change += std::abs(next[v] - p[v]);
        }
        p.swap(next);
        out.iterations = iter;
        out.residual = change;
        if (change < options.tolerance) {
            out.scores = std::move(p);
            return out;
        }
    }
    throw Error(ErrorKind::NoConvergence, "PPR from " + graph.name(source) + " did not converge in " +
                                              std::to_string(options.max_iters) + " iterations, residual " +
                                              std::to_string(out.residual));
}

PprVector compute_ppr(const OntologyGraph& graph, std::string_view source, const PprOptions& options) {
    return compute_ppr(graph, graph.index(source), options);
}

int transform_similarity(double ppr, double threshold) {
    if (!(threshold > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "similarity threshold must be positive");
    }
    if (ppr < threshold) {
        return 1;
    }
    // floor(log2 x) is read off the binary exponent, which is exact. The 1e-12
    // relative slack absorbs the rounding of ppr / threshold for decimal inputs
    // that land on a power of two (0.2047 / 1e-4 + 1 = 2048), and keeps the map monotone.
    int exponent = 0;
    std::frexp((ppr / threshold + 1.0) * (1.0 + 1e-12), &exponent);
    return exponent - 1;
}

SimilarityTable::SimilarityTable(std::vector<std::size_t> nodes, std::vector<double> ppr, double threshold)
    : nodes_(std::move(nodes)), ppr_(std::move(ppr)), threshold_(threshold) {
    if (ppr_.size() != nodes_.size() * nodes_.size()) {
        throw Error(ErrorKind::SizeMismatch, "similarity table needs a square PPR block");
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        position_.emplace(nodes_[i], i);
    }
    levels_.reserve(ppr_.size());
    for (double v : ppr_) {
        levels_.push_back(transform_similarity(v, threshold_));
    }
}

std::size_t SimilarityTable::slot(std::size_t u, std::size_t v) const {
    auto iu = position_.find(u);
    auto iv = position_.find(v);
    if (iu == position_.end() || iv == position_.end()) {
        throw Error(ErrorKind::MissingSimilarity, "pair (" + std::to_string(u) + ", " + std::to_string(v) + ") not in table");
    }
    return iu->second * nodes_.size() + iv->second;
}

int SimilarityTable::level(std::size_t u, std::size_t v) const {
    return levels_[slot(u, v)];
}

double SimilarityTable::ppr(std::size_t u, std::size_t v) const {
    return ppr_[slot(u, v)];
}

std::string SimilarityTable::to_tsv(const OntologyGraph& graph) const {
    std::string out;
    char buf[64];
    for (std::size_t a = 0; a < nodes_.size(); ++a) {
        for (std::size_t b = 0; b < nodes_.size(); ++b) {
            const std::size_t s = a * nodes_.size() + b;
            std::snprintf(buf, sizeof(buf), "%.17g", ppr_[s]);
            out += graph.name(nodes_[a]) + '\t' + graph.name(nodes_[b]) + '\t' + std::to_string(levels_[s]) + '\t' + buf + '\n';
        }
    }
    return out;
}

SimilarityTable build_similarity_table(const OntologyGraph& graph, const std::vector<std::size_t>& subset,
                                       const PprOptions& options, double threshold) {
    const std::size_t m = subset.size();
    std::vector<double> block(m * m);
    for (std::size_t a = 0; a < m; ++a) {
        const PprVector p = compute_ppr(graph, subset[a], options);
        for (std::size_t b = 0; b < m; ++b) {
            block[a * m + b] = p.scores[subset[b]];
        }
    }
    return SimilarityTable(subset, std::move(block), threshold);
}

std::vector<std::size_t> ancestors(const OntologyGraph& graph, std::size_t node) {
    if (node >= graph.size()) {
        throw Error(ErrorKind::UnknownNode, "node index " + std::to_string(node));
    }
    std::vector<char> seen(graph.size(), 0);
    std::vector<std::size_t> stack(graph.parents(node).begin(), graph.parents(node).end());
    std::vector<std::size_t> out;
    while (!stack.empty()) {
        const std::size_t v = stack.back();
        stack.pop_back();
        if (seen[v]) {
            continue;
        }
        seen[v] = 1;
        out.push_back(v);
        for (std::size_t p : graph.parents(v)) {
            stack.push_back(p);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

AncestorSets::AncestorSets(const OntologyGraph& graph) {
    sets_.reserve(graph.size());
    for (std::size_t v = 0; v < graph.size(); ++v) {
        sets_.push_back(ancestors(graph, v));
    }
}

bool AncestorSets::is_ancestor(std::size_t candidate, std::size_t node) const {
    const auto& s = sets_.at(node);
    return std::binary_search(s.begin(), s.end(), candidate);
}

std::vector<std::size_t> negative_set(std::size_t i, std::size_t j, const std::vector<std::size_t>& batch_types,
                                      const SimilarityTable& table, const AncestorSets& anc) {
    if (i == j || i >= batch_types.size() || j >= batch_types.size()) {
        throw Error(ErrorKind::InvalidArgument, "negative_set needs distinct in-range target and positive");
    }
    const std::size_t ci = batch_types[i];
    const int positive = table.level(ci, batch_types[j]);
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < batch_types.size(); ++k) {
        if (k == i) {
            continue;
        }
        const std::size_t ck = batch_types[k];
        if (positive > table.level(ci, ck) && !anc.is_ancestor(ck, ci)) {
            out.push_back(k);
        }
    }
    return out;
}

} // namespace cellokit::ontology
