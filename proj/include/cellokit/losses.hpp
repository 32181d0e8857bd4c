#pragma once

#include "cellokit/autodiff.hpp"
#include "cellokit/model.hpp"
#include "cellokit/ontology.hpp"
#include "cellokit/tokenizer.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace cellokit::losses {

using ad::Matrix;

struct LossBreakdown {
    double mgp = 0.0;
    double intra = 0.0;
    double inter = 0.0;
    double reg = 0.0;
    double total = 0.0;
};

/// Unweighted sum of the four components.
LossBreakdown combine(double mgp, double intra, double inter, double reg);

/// Per-component multipliers applied to the optimized objective; all 1 by default.
struct LossWeights {
    double mgp = 1.0;
    double intra = 1.0;
    double inter = 1.0;
    double reg = 1.0;
};

enum class IntraDenominator {
    /// Every other batch element j contributes exp(z_i . h_{c_j} / tau), repeats included.
    PerCell,
    /// Each distinct type contributes once; the positive type only through the numerator term.
    UniqueTypes,
};

// Value-only evaluations. They share no code with the tape operations below,
// which keeps them usable as an independent cross-check.

/// Mean cross-entropy over rows; 0 for no rows. Throws Error(LabelOutOfRange).
double loss_mgp(const Matrix& logits, std::span<const std::size_t> labels);

/**
 * Supervised contrastive loss between cells and type embeddings:
 * -sum_i log( exp(z_i.h_{c_i}/tau) / (exp(z_i.h_{c_i}/tau) + sum_{j != i} exp(z_i.h_{c_j}/tau)) ).
 * Row i of `type_rows` is h_{c_i}. `types` is only read in UniqueTypes mode.
 */
double loss_intra(const Matrix& z, const Matrix& type_rows, double tau,
                  IntraDenominator mode = IntraDenominator::PerCell, std::span<const std::size_t> types = {});

/// sum_i || W h_i + b - z_i ||^2
double loss_reg(const Matrix& z, const Matrix& type_rows, const Matrix& weight, const Matrix& bias);

/**
 * Negative sets for every ordered pair: `sets[i * B + j]` is Omega_{i,j}
 * (empty on the diagonal). `batch_types` holds ontology node indices.
 */
struct InterPlan {
    std::size_t batch = 0;
    std::vector<std::vector<std::size_t>> sets;
};

InterPlan plan_inter(const std::vector<std::size_t>& batch_types, const ontology::SimilarityTable& table,
                     const ontology::AncestorSets& anc);

/// -sum_i sum_{j != i} log( exp(z_i.z_j/tau) / (exp(z_i.z_j/tau) + sum_{k in Omega_ij} exp(z_i.z_k/tau)) )
double loss_inter(const Matrix& z, const InterPlan& plan, double tau);
double loss_inter(const Matrix& z, const std::vector<std::size_t>& batch_types, const ontology::SimilarityTable& table,
                  const ontology::AncestorSets& anc, double tau);

// Tape operations with exact gradients.

ad::Var intra_loss(ad::Tape& tape, ad::Var z, ad::Var type_rows, double tau,
                   IntraDenominator mode = IntraDenominator::PerCell, std::span<const std::size_t> types = {});
ad::Var reg_loss(ad::Tape& tape, ad::Var z, ad::Var mapped_type_rows);
ad::Var inter_loss(ad::Tape& tape, ad::Var z, const InterPlan& plan, double tau);

/// One pre-training batch after tokenization and masking.
struct PretrainBatch {
    std::vector<tokenizer::MaskedSequence> cells;
    /// Row of each cell's type in the model's cell-type table.
    std::vector<std::size_t> type_rows;
    /// Ontology node of each cell's type.
    std::vector<std::size_t> type_nodes;
};

struct ObjectiveOptions {
    LossWeights weights;
    IntraDenominator intra_mode = IntraDenominator::PerCell;
};

struct ObjectiveContext {
    const ontology::SimilarityTable* table = nullptr;
    const ontology::AncestorSets* ancestors = nullptr;
    ObjectiveOptions options;
};

struct Objective {
    ad::Var total;
    ad::Var mgp;
    ad::Var intra;
    ad::Var inter;
    ad::Var reg;
    LossBreakdown breakdown;
};

/**
 * Builds the full pre-training objective on `tape`. `breakdown` holds the
 * raw component values; `total` is the weighted sum that gets optimized,
 * equal to `breakdown.total` when all weights are 1.
 */
Objective total_loss(ad::Tape& tape, model::ModelState& state, const PretrainBatch& batch, const ObjectiveContext& ctx,
                     std::mt19937_64* dropout_rng = nullptr);

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t probes = 0;
    std::string worst_parameter;
};

/**
 * Compares tape gradients with fourth-order central differences
 * (f(x-2e) - 8f(x-e) + 8f(x+e) - f(x+2e)) / 12e at `n_probes` entries drawn
 * uniformly from `params`. Error per probe is |g_a - g_fd| / max(|g_a|, |g_fd|, 1e-8).
 * `build` must construct the scalar loss on the given tape and be deterministic.
 * Throws Error(NonFiniteLoss).
 */
GradCheckResult grad_check(const std::function<ad::Var(ad::Tape&)>& build, std::span<ad::Parameter* const> params,
                           double eps, std::size_t n_probes, std::uint64_t seed = 0);

} // namespace cellokit::losses
