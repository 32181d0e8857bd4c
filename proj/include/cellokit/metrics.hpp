#pragma once

#include "cellokit/autodiff.hpp"
#include "cellokit/clustering.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cellokit::metrics {

using Labels = std::span<const std::size_t>;

/// Mutual information over the arithmetic mean of the two entropies; 1 when both labelings are constant.
double nmi(Labels a, Labels b);

/// Adjusted Rand index from the contingency table; 1 when the denominator vanishes.
double ari(Labels a, Labels b);

/// Per-sample Euclidean silhouette; samples in singleton clusters score 0.
std::vector<double> silhouette_samples(const ad::Matrix& points, Labels labels);

/// (mean silhouette + 1) / 2. Throws Error(SingleCluster) with fewer than two labels.
double asw(const ad::Matrix& points, Labels labels);

/**
 * Mean over cell types of mean(1 - |s_i|), where s_i is the batch-label
 * silhouette among that type's cells. Types observed in a single batch are
 * skipped; if every type is skipped the score is 0.
 */
double asw_batch(const ad::Matrix& points, Labels types, Labels batches);

/// Mean over types of |largest connected component| / |cells|, within each type's symmetrized kNN subgraph.
double graph_conn(const clustering::KnnGraph& knn, Labels types);

double accuracy(Labels preds, Labels labels);

/// Unweighted mean of per-class F1 over every class seen in either input; 0/0 counts as 0.
double macro_f1(Labels preds, Labels labels);

/// Mann-Whitney AUROC with average ranks for ties. `positive[i]` is 0 or 1. Throws Error(OneClassOnly).
double auroc(std::span<const double> scores, std::span<const int> positive);

/// Average ranks (1-based), ties sharing the mean of their positions.
std::vector<double> average_ranks(std::span<const double> x);

/// Throws Error(ZeroVariance) or Error(LengthMismatch).
double pcc(std::span<const double> x, std::span<const double> y);
double spearman(std::span<const double> x, std::span<const double> y);

double avg_bio(double nmi, double ari, double asw);
double avg_batch(double asw_b, double graph_conn);
double overall(double avg_bio, double avg_batch);

/// Named scalar metrics in insertion order, plus free-form provenance fields.
class MetricReport {
public:
    void set(std::string_view name, double value);
    std::optional<double> find(std::string_view name) const;
    /// Throws Error(MissingComponent).
    double get(std::string_view name) const;
    bool has(std::string_view name) const { return find(name).has_value(); }

    void set_provenance(std::string_view key, std::string value);
    const std::vector<std::pair<std::string, double>>& values() const { return values_; }
    const std::vector<std::pair<std::string, std::string>>& provenance() const { return provenance_; }

    /// "metric<TAB>value" with 6 decimals.
    std::string to_tsv() const;
    /// Flat JSON object: metrics as numbers with 6 decimals, then provenance as strings.
    std::string to_json() const;

private:
    std::vector<std::pair<std::string, double>> values_;
    std::vector<std::pair<std::string, std::string>> provenance_;
};

/**
 * Adds the aggregates to a copy of `parts`. AvgBio comes from NMI, ARI and
 * ASW (or a supplied AvgBio), AvgBatch from ASW_b and GraphConn (or a
 * supplied AvgBatch), and Overall = 0.6 AvgBio + 0.4 AvgBatch when both
 * exist. A partial group, or no group at all, throws Error(MissingComponent).
 */
MetricReport aggregate(const MetricReport& parts);

} // namespace cellokit::metrics
