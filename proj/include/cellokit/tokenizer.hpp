#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace cellokit::tokenizer {

using TokenId = std::uint32_t;

/**
 * @brief Gene vocabulary. Genes take token ids 0..M-1 in file order; the
 * special tokens MASK, CLS and PAD follow as M, M+1, M+2.
 */
class GeneVocab {
public:
    GeneVocab() = default;
    /// Throws Error(InvalidArgument) on duplicate or empty gene ids.
    explicit GeneVocab(std::vector<std::string> genes);

    /// One gene id per line; blank lines are rejected.
    static GeneVocab parse(std::string_view text);
    std::string to_text() const;

    std::size_t n_genes() const { return genes_.size(); }
    std::size_t size() const { return genes_.size() + 3; }
    TokenId mask() const { return static_cast<TokenId>(genes_.size()); }
    TokenId cls() const { return static_cast<TokenId>(genes_.size() + 1); }
    TokenId pad() const { return static_cast<TokenId>(genes_.size() + 2); }
    bool is_gene(TokenId t) const { return t < genes_.size(); }

    std::optional<TokenId> find(std::string_view gene) const;
    const std::string& gene(TokenId t) const { return genes_.at(t); }
    const std::vector<std::string>& genes() const { return genes_; }

private:
    std::vector<std::string> genes_;
    std::unordered_map<std::string, TokenId> lookup_;
};

struct ExpressionProfile {
    std::string cell_id;
    /// (gene token, raw count); zero counts may be present or omitted.
    std::vector<std::pair<TokenId, std::uint64_t>> counts;
    std::string cell_type;
    std::string batch;
    std::string donor;
    std::string tissue;
};

/// Per-gene weighting: the median over cells where the gene is nonzero of count / cell total.
class NormalizationFactors {
public:
    NormalizationFactors() = default;
    explicit NormalizationFactors(std::vector<double> per_gene) : factors_(std::move(per_gene)) {}

    /// Zero marks a gene never observed nonzero.
    bool contains(TokenId g) const { return g < factors_.size() && factors_[g] > 0.0; }
    std::optional<double> find(TokenId g) const;
    /// Factor used when encoding: 1.0 for unseen genes.
    double weight(TokenId g) const { return contains(g) ? factors_[g] : 1.0; }
    const std::vector<double>& values() const { return factors_; }

    /// "gene<TAB>factor" for observed genes, in token order.
    std::string to_tsv(const GeneVocab& vocab) const;
    static NormalizationFactors parse_tsv(std::string_view text, const GeneVocab& vocab);

private:
    std::vector<double> factors_;
};

/// Throws Error(EmptyCorpus) when `corpus` is empty.
NormalizationFactors compute_factors(std::span<const ExpressionProfile> corpus, std::size_t n_genes);

struct TokenSequence {
    std::vector<TokenId> tokens;
    /// Number of non-PAD tokens, including CLS.
    std::size_t true_length = 0;
};

struct EncodeStats {
    std::size_t unknown_genes = 0;
    std::size_t empty_profiles = 0;
};

/**
 * Rank-value encoding. Counts are divided by the cell total and then by the
 * gene factor; expressed genes are ordered by that value, highest first, with
 * ties going to the lower token id. The sequence is CLS followed by the
 * ranked genes, truncated and padded to `context_length`.
 */
TokenSequence encode_cell(const ExpressionProfile& profile, const GeneVocab& vocab, const NormalizationFactors& factors,
                          std::size_t context_length, EncodeStats* stats = nullptr);

inline constexpr std::int64_t no_label = -1;

struct MaskedSequence {
    std::vector<TokenId> tokens;
    /// Original token at selected positions, `no_label` elsewhere.
    std::vector<std::int64_t> labels;
    std::vector<std::size_t> selected;
    std::size_t true_length = 0;
};

/**
 * Selects each gene position independently with probability `mask_ratio`;
 * a selected token becomes MASK with probability 0.8, a uniformly drawn gene
 * with probability 0.1, and stays unchanged otherwise.
 */
MaskedSequence apply_masking(const TokenSequence& seq, const GeneVocab& vocab, double mask_ratio, std::uint64_t seed);

} // namespace cellokit::tokenizer
