#pragma once

#include "cellokit/autodiff.hpp"
#include "cellokit/metrics.hpp"
#include "cellokit/model.hpp"
#include "cellokit/ontology.hpp"
#include "cellokit/tokenizer.hpp"
#include "cellokit/trainer.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace cellokit::tasks {

/// String labels mapped to codes by sorted name.
struct LabelCodes {
    std::vector<std::string> names;
    std::vector<std::size_t> codes;
};

LabelCodes encode_labels(const std::vector<std::string>& labels);

/// Tokenizer assets and context length for encoding a corpus.
struct Encoding {
    const tokenizer::GeneVocab* vocab = nullptr;
    const tokenizer::NormalizationFactors* factors = nullptr;
    std::size_t context_length = 64;
};

std::vector<tokenizer::TokenSequence> encode_corpus(std::span<const tokenizer::ExpressionProfile> profiles, const Encoding& enc,
                                                    tokenizer::EncodeStats* stats = nullptr);

/// Unit-norm evaluation-mode embeddings, one row per profile.
ad::Matrix embed_corpus(const model::ModelState& state, std::span<const tokenizer::ExpressionProfile> profiles,
                        const Encoding& enc, std::size_t batch_size = 32);

/// Resolution sweep against the type labels, then NMI, ARI, ASW and AvgBio.
metrics::MetricReport zero_shot_eval(const ad::Matrix& embeddings, const std::vector<std::string>& types, std::size_t k = 15,
                                     std::uint64_t seed = 0);

/// The zero-shot metrics plus ASW_b, GraphConn, AvgBatch and Overall.
metrics::MetricReport batch_integration_eval(const ad::Matrix& embeddings, const std::vector<std::string>& types,
                                             const std::vector<std::string>& batches, std::size_t k = 15, std::uint64_t seed = 0);

/// Mean embedding per known type, renormalized; types sorted lexicographically.
struct TypeProfile {
    std::vector<std::string> types;
    ad::Matrix profiles;

    /// Throws Error(UnknownTypeId).
    std::span<const double> of(const std::string& type) const;
};

/**
 * Averages the embeddings of each type's cells. With `fraction` < 1, each
 * type uses a seeded subsample of ceil(fraction * n) of its cells.
 */
TypeProfile build_type_profiles(const ad::Matrix& embeddings, const std::vector<std::string>& types, double fraction = 1.0,
                                std::uint64_t seed = 0);

struct NovelTypeTask {
    /// Known types in the fixed lexicographic order u_1 < u_2 < ...
    std::vector<std::string> known;
    std::vector<std::string> unknown;
    /// For each unknown v, raw PPR(u, v) over `known` in order.
    std::map<std::string, std::vector<double>> ppr_rows;
};

/**
 * Builds the task from the ontology: PPR from each known type, read at each
 * unknown type. Throws Error(UnknownNode) for types absent from the ontology
 * and Error(InvalidArgument) when the two sets overlap.
 */
NovelTypeTask make_novel_task(const ontology::OntologyGraph& graph, std::vector<std::string> known,
                              std::vector<std::string> unknown, const ontology::PprOptions& ppr = {});

enum class Alignment {
    /// Spearman correlation of the two vectors over the known types.
    Spearman,
    /// Cosine of the two vectors.
    Cosine,
};

struct NovelPrediction {
    std::string type;
    double score = 0.0;
};

/**
 * For each query row: s(q, u) is the cosine with every known-type profile,
 * compared with each unknown type's PPR vector; the best-aligned unknown type
 * wins, ties going to the lexicographically smallest id. An alignment with a
 * constant vector scores 0.
 * Throws Error(EmptyUnknownSet), Error(MissingPPRRow), Error(UnknownTypeId).
 */
std::vector<NovelPrediction> novel_celltype_classify(const ad::Matrix& queries, const TypeProfile& profiles,
                                                     const NovelTypeTask& task, Alignment alignment = Alignment::Spearman);

/// `n_repeats` sorted subsets of size max(1, round(fraction * |pool|)), sampled without replacement.
std::vector<std::vector<std::string>> sample_difficulty(const std::vector<std::string>& pool, double fraction, std::size_t n_repeats,
                                                        std::uint64_t seed);

enum class Impact {
    /// 1 - cos(z, z')
    Cosine,
    /// ||z - z'||
    L2,
};

struct GeneImpact {
    tokenizer::TokenId gene = 0;
    double impact = 0.0;
};

/// Maps a batch of sequences to one embedding row each.
using Embedder = std::function<ad::Matrix(std::span<const tokenizer::TokenSequence>)>;

/**
 * In-silico knockout: every gene position of `seq` is replaced by MASK in
 * turn and the change of the cell embedding recorded. Genes absent from the
 * sequence are not listed; their impact is 0 by definition.
 */
std::vector<GeneImpact> knockout_scores(const Embedder& embedder, const tokenizer::TokenSequence& seq,
                                        const tokenizer::GeneVocab& vocab, Impact metric = Impact::Cosine);
std::vector<GeneImpact> knockout_scores(const model::ModelState& state, const tokenizer::ExpressionProfile& profile,
                                        const Encoding& enc, Impact metric = Impact::Cosine);

using MarkerSets = std::map<std::string, std::set<std::string>>;

/// "type<TAB>gene" lines; '#' comments and blank lines skipped.
MarkerSets parse_markers(std::string_view text);

struct MarkerEval {
    /// AUROC per evaluated type, sorted by type.
    std::vector<std::pair<std::string, double>> per_type;
    /// Mean of the per-type values.
    double auroc = 0.0;
};

/**
 * Per type: impacts are averaged over the type's cells (0 where a gene was
 * not in a cell's sequence) for every gene scored in at least one of them,
 * then markers are ranked against the other scored genes. Types without a
 * marker entry are skipped. Throws Error(OneClassOnly) when an evaluated type
 * has only markers or only non-markers among its scored genes, or when no
 * type can be evaluated.
 */
MarkerEval marker_eval(const std::vector<std::vector<GeneImpact>>& cell_scores, const std::vector<std::string>& types,
                       const MarkerSets& markers, const tokenizer::GeneVocab& vocab);

struct MarkerCandidate {
    std::string type;
    std::string gene;
    std::size_t frequency = 0;
    double mean_impact = 0.0;
};

/**
 * Per cell, the top ceil(10%) of scored genes that are not known markers of
 * any type; per type, the 10 genes selected most often (ties to the higher
 * total impact, then the lower token id); finally genes listed for more than
 * one type are dropped. Output is sorted by type, then by rank.
 */
std::vector<MarkerCandidate> novel_marker_discovery(const std::vector<std::vector<GeneImpact>>& cell_scores,
                                                    const std::vector<std::string>& types, const MarkerSets& known_markers,
                                                    const tokenizer::GeneVocab& vocab);

struct FinetuneOptions {
    std::size_t epochs = 10;
    std::size_t batch_size = 16;
    double lr = 1e-3;
    double weight_decay = 1e-3;
    std::size_t warmup_steps = 0;
    std::uint64_t seed = 0;
};

struct Classifier {
    model::ModelState encoder;
    ad::Parameter head_weight;
    ad::Parameter head_bias;
    std::vector<std::string> classes;

    /// Predicted class index per sequence (eval mode).
    std::vector<std::size_t> predict(std::span<const tokenizer::TokenSequence> seqs) const;
};

struct FinetuneResult {
    Classifier classifier;
    double val_accuracy = 0.0;
    double val_macro_f1 = 0.0;
    /// Epoch of the returned weights; 0 means the untrained head.
    std::size_t best_epoch = 0;
};

/**
 * Full-model fine-tuning with a linear head on the cell embedding and
 * cross-entropy. After every epoch the validation macro F1 is measured; the
 * weights of the best epoch (earliest on ties) are returned.
 * Throws Error(UnseenValLabel) when a validation label is absent from training.
 */
FinetuneResult finetune_classifier(const model::ModelState& pretrained, std::span<const tokenizer::TokenSequence> train_seqs,
                                   const std::vector<std::string>& train_labels,
                                   std::span<const tokenizer::TokenSequence> val_seqs, const std::vector<std::string>& val_labels,
                                   const FinetuneOptions& options);

/// "cell_id<TAB>predicted_type<TAB>score"
std::string format_predictions(const std::vector<std::string>& cell_ids, const std::vector<NovelPrediction>& preds);

/// "type<TAB>gene<TAB>frequency<TAB>mean_impact"
std::string format_candidates(const std::vector<MarkerCandidate>& candidates);

} // namespace cellokit::tasks
