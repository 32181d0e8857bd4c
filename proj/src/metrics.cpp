#include "cellokit/metrics.hpp"
#include "cellokit/error.hpp"
#include "cellokit/kernels.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <limits>
#include <numeric>
#include <set>

namespace cellokit::metrics {

namespace {

void require_same_length(std::size_t a, std::size_t b) {
    if (a != b) {
        throw Error(ErrorKind::LengthMismatch, "inputs have lengths " + std::to_string(a) + " and " + std::to_string(b));
    }
}

// Dense relabeling by first occurrence.
std::vector<std::size_t> densify(Labels labels, std::size_t& n_classes) {
    std::map<std::size_t, std::size_t> remap;
    std::vector<std::size_t> out;
    out.reserve(labels.size());
    for (std::size_t l : labels) {
        out.push_back(remap.emplace(l, remap.size()).first->second);
    }
    n_classes = remap.size();
    return out;
}

struct Contingency {
    std::size_t n = 0;
    std::vector<double> a_sums;
    std::vector<double> b_sums;
    std::map<std::pair<std::size_t, std::size_t>, double> cells;
};

Contingency contingency(Labels a, Labels b) {
    require_same_length(a.size(), b.size());
    std::size_t na = 0;
    std::size_t nb = 0;
    const auto da = densify(a, na);
    const auto db = densify(b, nb);
    Contingency c;
    c.n = a.size();
    c.a_sums.assign(na, 0.0);
    c.b_sums.assign(nb, 0.0);
    for (std::size_t i = 0; i < c.n; ++i) {
        c.a_sums[da[i]] += 1.0;
        c.b_sums[db[i]] += 1.0;
        c.cells[{da[i], db[i]}] += 1.0;
    }
    return c;
}

double entropy(const std::vector<double>& counts, double n) {
    double h = 0.0;
    for (double c : counts) {
        if (c > 0.0) {
            const double p = c / n;
            h -= p * std::log(p);
        }
    }
    return h;
}

double comb2(double x) { return x * (x - 1.0) / 2.0; }

std::vector<double> distance_matrix(const ad::Matrix& points) {
    const std::size_t n = points.rows;
    const auto& kt = kernels::active();
    std::vector<double> d(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = std::sqrt(kt.squared_distance(points.row(i).data(), points.row(j).data(), points.cols));
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    return d;
}

// Silhouettes of the points listed in `members` (indices into a full distance matrix) under `labels`.
std::vector<double> silhouette_subset(const std::vector<double>& dist, std::size_t n, const std::vector<std::size_t>& members,
                                      const std::vector<std::size_t>& labels, std::size_t n_classes) {
    std::vector<double> sizes(n_classes, 0.0);
    for (std::size_t l : labels) {
        sizes[l] += 1.0;
    }
    std::vector<double> s(members.size(), 0.0);
    std::vector<double> sums(n_classes);
    for (std::size_t a = 0; a < members.size(); ++a) {
        const std::size_t own = labels[a];
        if (sizes[own] <= 1.0) {
            continue;
        }
        std::fill(sums.begin(), sums.end(), 0.0);
        for (std::size_t b = 0; b < members.size(); ++b) {
            sums[labels[b]] += dist[members[a] * n + members[b]];
        }
        const double intra = sums[own] / (sizes[own] - 1.0);
        double nearest = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < n_classes; ++c) {
            if (c != own && sizes[c] > 0.0) {
                nearest = std::min(nearest, sums[c] / sizes[c]);
            }
        }
        const double denom = std::max(intra, nearest);
        s[a] = denom > 0.0 ? (nearest - intra) / denom : 0.0;
    }
    return s;
}

} // namespace

double nmi(Labels a, Labels b) {
    const auto c = contingency(a, b);
    if (c.n == 0) {
        throw Error(ErrorKind::DegenerateInput, "nmi of empty labelings");
    }
    const double n = static_cast<double>(c.n);
    const double ha = entropy(c.a_sums, n);
    const double hb = entropy(c.b_sums, n);
    if (c.a_sums.size() == 1 && c.b_sums.size() == 1) {
        return 1.0;
    }
    double mi = 0.0;
    for (const auto& [key, count] : c.cells) {
        const double pij = count / n;
        mi += pij * std::log(count * n / (c.a_sums[key.first] * c.b_sums[key.second]));
    }
    const double mean_h = 0.5 * (ha + hb);
    return std::clamp(mi / mean_h, 0.0, 1.0);
}

double ari(Labels a, Labels b) {
    const auto c = contingency(a, b);
    if (c.n < 2) {
        throw Error(ErrorKind::DegenerateInput, "ari needs at least 2 samples");
    }
    double index = 0.0;
    for (const auto& [key, count] : c.cells) {
        index += comb2(count);
    }
    double sa = 0.0;
    double sb = 0.0;
    for (double x : c.a_sums) sa += comb2(x);
    for (double x : c.b_sums) sb += comb2(x);
    // Scaled by the pair count so every term is an integer (or half-integer)
    // and small cases are exact: (index - expected) / (max - expected) times C(n, 2).
    const double pairs = comb2(static_cast<double>(c.n));
    const double num = index * pairs - sa * sb;
    const double den = 0.5 * (sa + sb) * pairs - sa * sb;
    if (den == 0.0) {
        return 1.0;
    }
    return num / den;
}

std::vector<double> silhouette_samples(const ad::Matrix& points, Labels labels) {
    require_same_length(points.rows, labels.size());
    std::size_t n_classes = 0;
    const auto dense = densify(labels, n_classes);
    if (n_classes < 2) {
        throw Error(ErrorKind::SingleCluster, "silhouette needs at least two labels");
    }
    std::vector<std::size_t> all(points.rows);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return silhouette_subset(distance_matrix(points), points.rows, all, dense, n_classes);
}

double asw(const ad::Matrix& points, Labels labels) {
    const auto s = silhouette_samples(points, labels);
    const double mean = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
    return (mean + 1.0) / 2.0;
}

double asw_batch(const ad::Matrix& points, Labels types, Labels batches) {
    require_same_length(points.rows, types.size());
    require_same_length(points.rows, batches.size());
    const auto dist = distance_matrix(points);
    std::map<std::size_t, std::vector<std::size_t>> by_type;
    for (std::size_t i = 0; i < types.size(); ++i) {
        by_type[types[i]].push_back(i);
    }
    double total = 0.0;
    std::size_t counted = 0;
    for (const auto& [type, members] : by_type) {
        std::vector<std::size_t> member_batches;
        for (std::size_t i : members) member_batches.push_back(batches[i]);
        std::size_t n_batches = 0;
        const auto dense = densify(member_batches, n_batches);
        if (n_batches < 2) {
            continue;
        }
        const auto s = silhouette_subset(dist, points.rows, members, dense, n_batches);
        double score = 0.0;
        for (double v : s) score += 1.0 - std::abs(v);
        total += score / static_cast<double>(s.size());
        ++counted;
    }
    return counted == 0 ? 0.0 : total / static_cast<double>(counted);
}

double graph_conn(const clustering::KnnGraph& knn, Labels types) {
    require_same_length(knn.n, types.size());
    const auto sym = clustering::symmetrize(knn);
    std::map<std::size_t, std::vector<std::size_t>> by_type;
    for (std::size_t i = 0; i < types.size(); ++i) {
        by_type[types[i]].push_back(i);
    }
    if (by_type.empty()) {
        throw Error(ErrorKind::DegenerateInput, "graph_conn of an empty graph");
    }
    std::vector<char> seen(knn.n, 0);
    std::vector<std::size_t> stack;
    double total = 0.0;
    for (const auto& [type, members] : by_type) {
        std::size_t largest = 0;
        for (std::size_t start : members) {
            if (seen[start]) continue;
            std::size_t size = 0;
            seen[start] = 1;
            stack.push_back(start);
            while (!stack.empty()) {
                const std::size_t u = stack.back();
                stack.pop_back();
                ++size;
                for (const auto& [v, w] : sym.adj[u]) {
                    if (!seen[v] && types[v] == type) {
                        seen[v] = 1;
                        stack.push_back(v);
                    }
                }
            }
            largest = std::max(largest, size);
        }
        total += static_cast<double>(largest) / static_cast<double>(members.size());
    }
    return total / static_cast<double>(by_type.size());
}

double accuracy(Labels preds, Labels labels) {
    require_same_length(preds.size(), labels.size());
    if (preds.empty()) {
        throw Error(ErrorKind::DegenerateInput, "accuracy of no predictions");
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        hits += preds[i] == labels[i] ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double macro_f1(Labels preds, Labels labels) {
    require_same_length(preds.size(), labels.size());
    if (preds.empty()) {
        throw Error(ErrorKind::DegenerateInput, "macro F1 of no predictions");
    }
    std::map<std::size_t, std::array<double, 3>> counts; // tp, fp, fn
    for (std::size_t i = 0; i < preds.size(); ++i) {
        auto& p = counts[preds[i]];
        auto& l = counts[labels[i]];
        if (preds[i] == labels[i]) {
            p[0] += 1.0;
        } else {
            p[1] += 1.0;
            l[2] += 1.0;
        }
    }
    double total = 0.0;
    for (const auto& [cls, c] : counts) {
        const double denom = 2.0 * c[0] + c[1] + c[2];
        total += denom > 0.0 ? 2.0 * c[0] / denom : 0.0;
    }
    return total / static_cast<double>(counts.size());
}

std::vector<double> average_ranks(std::span<const double> x) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(x.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
        i = j + 1;
    }
    return ranks;
}

double auroc(std::span<const double> scores, std::span<const int> positive) {
    require_same_length(scores.size(), positive.size());
    const auto ranks = average_ranks(scores);
    double n_pos = 0.0;
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (positive[i] != 0) {
            n_pos += 1.0;
            rank_sum += ranks[i];
        }
    }
    const double n_neg = static_cast<double>(scores.size()) - n_pos;
    if (n_pos == 0.0 || n_neg == 0.0) {
        throw Error(ErrorKind::OneClassOnly, "auroc needs both positive and negative samples");
    }
    return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

double pcc(std::span<const double> x, std::span<const double> y) {
    require_same_length(x.size(), y.size());
    if (x.size() < 2) {
        throw Error(ErrorKind::DegenerateInput, "correlation needs at least 2 points");
    }
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw Error(ErrorKind::ZeroVariance, "correlation of a constant vector");
    }
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman(std::span<const double> x, std::span<const double> y) {
    require_same_length(x.size(), y.size());
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    return pcc(rx, ry);
}

double avg_bio(double nmi, double ari, double asw) { return (nmi + ari + asw) / 3.0; }
double avg_batch(double asw_b, double graph_conn) { return (asw_b + graph_conn) / 2.0; }
double overall(double avg_bio, double avg_batch) { return 0.6 * avg_bio + 0.4 * avg_batch; }

void MetricReport::set(std::string_view name, double value) {
    for (auto& [k, v] : values_) {
        if (k == name) {
            v = value;
            return;
        }
    }
    values_.emplace_back(std::string(name), value);
}

std::optional<double> MetricReport::find(std::string_view name) const {
    for (const auto& [k, v] : values_) {
        if (k == name) return v;
    }
    return std::nullopt;
}

double MetricReport::get(std::string_view name) const {
    if (auto v = find(name)) return *v;
    throw Error(ErrorKind::MissingComponent, "metric " + std::string(name) + " is missing");
}

void MetricReport::set_provenance(std::string_view key, std::string value) {
    for (auto& [k, v] : provenance_) {
        if (k == key) {
            v = std::move(value);
            return;
        }
    }
    provenance_.emplace_back(std::string(key), std::move(value));
}

std::string MetricReport::to_tsv() const {
    std::string out;
    char buf[64];
    for (const auto& [k, v] : values_) {
        std::snprintf(buf, sizeof(buf), "%.6f", v);
        out += k + '\t' + buf + '\n';
    }
    return out;
}

std::string MetricReport::to_json() const {
    std::string out = "{";
    char buf[64];
    bool first = true;
    for (const auto& [k, v] : values_) {
        std::snprintf(buf, sizeof(buf), "%.6f", v);
        out += (first ? "" : ", ") + nlohmann::json(k).dump() + ": " + buf;
        first = false;
    }
    for (const auto& [k, v] : provenance_) {
        out += (first ? "" : ", ") + nlohmann::json(k).dump() + ": " + nlohmann::json(v).dump();
        first = false;
    }
    return out + "}";
}

MetricReport aggregate(const MetricReport& parts) {
    MetricReport out = parts;
    auto group = [&](std::initializer_list<const char*> names, const char* supplied, auto combine) -> std::optional<double> {
        std::size_t present = 0;
        for (const char* n : names) present += parts.has(n) ? 1 : 0;
        if (present == 0) {
            return parts.find(supplied);
        }
        if (present != names.size()) {
            std::string missing;
            for (const char* n : names) {
                if (!parts.has(n)) missing += std::string(missing.empty() ? "" : ", ") + n;
            }
            throw Error(ErrorKind::MissingComponent, std::string(supplied) + " needs " + missing);
        }
        return combine();
    };
    const auto bio = group({"NMI", "ARI", "ASW"}, "AvgBio",
                           [&] { return avg_bio(parts.get("NMI"), parts.get("ARI"), parts.get("ASW")); });
    const auto batch = group({"ASW_b", "GraphConn"}, "AvgBatch",
                             [&] { return avg_batch(parts.get("ASW_b"), parts.get("GraphConn")); });
    if (!bio && !batch) {
        throw Error(ErrorKind::MissingComponent, "no metric group to aggregate");
    }
    if (bio) out.set("AvgBio", *bio);
    if (batch) out.set("AvgBatch", *batch);
    if (bio && batch) out.set("Overall", overall(*bio, *batch));
    return out;
}

} // namespace cellokit::metrics
