#pragma once

#include "cellokit/autodiff.hpp"
#include "cellokit/tokenizer.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cellokit::model {

struct ModelConfig {
    std::size_t n_layers = 2;
    std::size_t n_heads = 2;
    std::size_t embed_dim = 32;
    std::size_t ffn_dim = 64;
    std::size_t vocab_size = 0;
    std::size_t max_len = 64;
    double dropout = 0.02;
    /// Temperature of the contrastive losses.
    double temperature = 0.1;
    std::uint64_t seed = 0;
    /// L2-normalize cell and type embeddings before any loss dot product.
    bool normalize_embeddings = true;
    /// Reuse the token embedding table as the masked-gene output projection.
    bool tie_mgp_projection = false;

    /// Throws Error(InvalidArgument) on inconsistent values.
    void validate() const;
};

/**
 * @brief All trainable tensors of the encoder and its heads.
 *
 * Parameters live in a fixed order with stable names:
 * `embed.token`, `embed.position`, `layers.<l>.{ln1,attn,ln2,ffn}.*`,
 * `final_ln.*`, `mgp.*`, `types.embedding` and `reg.*`. The cell-type table
 * has one row per entry of `type_ids()`, in that order.
 */
class ModelState {
public:
    ModelState() = default;
    /// Randomly initialized from `config.seed`. Every value is representable as a 32-bit float.
    ModelState(ModelConfig config, std::vector<std::string> type_ids);

    /// Zero-filled parameters, used when loading a checkpoint.
    static ModelState empty(ModelConfig config, std::vector<std::string> type_ids);

    const ModelConfig& config() const { return config_; }
    const std::vector<std::string>& type_ids() const { return type_ids_; }
    std::size_t n_types() const { return type_ids_.size(); }
    /// Throws Error(UnknownTypeId).
    std::size_t type_index(std::string_view type) const;
    std::optional<std::size_t> find_type(std::string_view type) const;

    std::vector<ad::Parameter>& parameters() { return params_; }
    const std::vector<ad::Parameter>& parameters() const { return params_; }
    ad::Parameter& param(std::string_view name);
    const ad::Parameter& param(std::string_view name) const;
    bool has_param(std::string_view name) const { return index_.count(std::string(name)) != 0; }

    void zero_grad();
    std::size_t parameter_count() const;

private:
    void build_layout();

    ModelConfig config_;
    std::vector<std::string> type_ids_;
    std::vector<ad::Parameter> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Token ids of a padded batch, stacked row-major as n_seq x seq_len.
struct EncoderInput {
    std::vector<tokenizer::TokenId> tokens;
    std::vector<std::size_t> lengths;
    std::size_t seq_len = 0;

    std::size_t n_seq() const { return lengths.size(); }
};

/// Packs sequences, trimming the shared PAD tail to the longest true length.
EncoderInput pack(std::span<const tokenizer::TokenSequence> seqs);
EncoderInput pack(std::span<const tokenizer::MaskedSequence> seqs);

struct ForwardOutput {
    /// Final per-token states, (n_seq * seq_len) x embed_dim.
    ad::Var states;
    /// Cell embeddings from the CLS position, n_seq x embed_dim (unit rows unless normalization is off).
    ad::Var embeddings;
    std::size_t seq_len = 0;
};

/**
 * Runs the encoder. `dropout_rng` enables training-mode dropout; pass null for
 * deterministic evaluation. Throws Error(TokenOutOfRange) for ids outside the
 * vocabulary and Error(InvalidArgument) when the batch exceeds `max_len`.
 */
ForwardOutput forward(ad::Tape& tape, ModelState& state, const EncoderInput& input, std::mt19937_64* dropout_rng = nullptr);

/// Masked-gene logits at flat row indices of `states`. Throws Error(PositionOutOfRange).
ad::Var mgp_logits(ad::Tape& tape, ModelState& state, ad::Var states, std::span<const std::size_t> rows);

/// Rows of the cell-type table, normalized like cell embeddings. Throws Error(UnknownTypeId).
ad::Var type_embeddings(ad::Tape& tape, ModelState& state, std::span<const std::size_t> type_indices);

/// The shared affine map applied to type embeddings by the regression regularizer.
ad::Var type_regression(ad::Tape& tape, ModelState& state, ad::Var type_rows);

/// Evaluation-mode cell embeddings, one row per sequence, computed in chunks of `batch_size`.
ad::Matrix embed(const ModelState& state, std::span<const tokenizer::TokenSequence> seqs, std::size_t batch_size = 32);

/// Normalized type-table row. Throws Error(UnknownTypeId).
std::vector<double> type_embedding(const ModelState& state, std::size_t type_index);

} // namespace cellokit::model
