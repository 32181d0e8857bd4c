#pragma once

#include "cellokit/losses.hpp"
#include "cellokit/model.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace cellokit::trainer {

enum class DecaySchedule { Linear, Constant };

struct TrainConfig {
    double lr = 1e-3;
    double weight_decay = 1e-3;
    std::size_t warmup_steps = 3333;
    std::size_t total_steps = 40000;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    /// Save an intermediate checkpoint every this many steps; 0 disables.
    std::size_t checkpoint_interval = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    DecaySchedule schedule = DecaySchedule::Linear;
    /// When false, embedding tables (token, position, cell type) skip weight decay.
    bool decay_embeddings = true;
    double mask_ratio = 0.15;

    void validate() const;
};

/**
 * Learning rate at `step`: linear ramp from 0 to `lr` over the warmup, then
 * linear decay to 0 at `total_steps` (or constant, per `schedule`).
 * Never negative.
 */
double lr_at(const TrainConfig& config, std::size_t step);

/// Adam with decoupled weight decay. Moments are kept in double precision.
class AdamW {
public:
    AdamW() = default;
    /// Tracks every parameter of `state`, which must outlive the optimizer and keep its layout.
    explicit AdamW(model::ModelState& state);
    explicit AdamW(std::vector<ad::Parameter*> params);

    /// Applies one update from the stored gradients; parameters stay float32-representable.
    void step(const TrainConfig& config, double lr);
    std::size_t steps_taken() const { return t_; }

private:
    std::vector<ad::Parameter*> params_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    std::size_t t_ = 0;
};

/// Throws Error(NonFiniteGradient) naming the first offending parameter.
void check_gradients(const model::ModelState& state);

/**
 * One optimization step on the full objective at schedule position `step`
 * (1-based). Throws Error(NonFiniteGradient) before touching parameters.
 */
losses::LossBreakdown train_step(model::ModelState& state, AdamW& optimizer, const losses::PretrainBatch& batch,
                                 const losses::ObjectiveContext& ctx, const TrainConfig& config, std::size_t step);

/// Pre-encoded training corpus.
struct PretrainData {
    std::vector<tokenizer::TokenSequence> sequences;
    std::vector<std::size_t> type_rows;
    std::vector<std::size_t> type_nodes;
};

struct LogRow {
    std::size_t step = 0;
    double lr = 0.0;
    /// Components scaled for logging: intra, inter and reg divided by the batch size.
    losses::LossBreakdown logged;
    losses::LossBreakdown raw;
};

/// "step<TAB>lr<TAB>mgp<TAB>intra<TAB>inter<TAB>reg<TAB>total"
std::string format_log_row(const LogRow& row);
std::string log_header();

/// Deterministic 64-bit mixing of a seed with a counter.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t counter);

/**
 * Runs `config.total_steps` steps. Batches come from per-epoch shuffles driven
 * by `config.seed`; masking and dropout draw from seeds derived from the step
 * and batch slot, so a run is a pure function of (seed, config, data).
 * `on_step` is called after every step (e.g. for logging or checkpoints).
 */
std::vector<LogRow> pretrain(model::ModelState& state, const PretrainData& data, const tokenizer::GeneVocab& vocab,
                             const losses::ObjectiveContext& ctx, const TrainConfig& config,
                             const std::function<void(const LogRow&)>& on_step = {});

// Checkpoints: "CELLOKIT" magic, u32 format version, model config, type-id
// ordering, then named tensors as little-endian float32 with explicit shapes.

inline constexpr std::uint32_t checkpoint_version = 1;

std::string serialize_checkpoint(const model::ModelState& state);
/// Throws Error(CorruptCheckpoint) or Error(VersionMismatch).
model::ModelState deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const model::ModelState& state, const std::filesystem::path& path);
model::ModelState load_checkpoint(const std::filesystem::path& path);

struct CheckpointExpectation {
    std::size_t vocab_size = 0;
    std::vector<std::string> type_ids;
};

/// Loads and additionally rejects a vocabulary size or type ordering that differs from `expected`.
model::ModelState load_checkpoint(const std::filesystem::path& path, const CheckpointExpectation& expected);

} // namespace cellokit::trainer
