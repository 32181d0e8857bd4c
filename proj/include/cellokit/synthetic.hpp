#pragma once

#include "cellokit/tokenizer.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace cellokit::synthetic {

struct SyntheticOptions {
    std::uint64_t seed = 0;
    std::size_t n_types = 12;
    /// Children per internal node; the tree is filled breadth-first.
    std::size_t tree_branching = 2;
    std::size_t n_genes = 200;
    std::size_t cells_per_type = 60;
    /// Scale of the log-mean shift each type adds on its signature genes.
    double signal_strength = 1.0;
    /// Standard deviation of the per-batch log gene factors.
    double batch_effect_strength = 0.0;
    std::size_t n_batches = 2;
    /// Signature genes drawn per non-root type.
    std::size_t signature_size = 8;
    double library_size = 1500.0;
    /// Gamma shape of the Gamma-Poisson count sampler; larger is closer to Poisson.
    double dispersion = 5.0;
};

struct SyntheticWorld {
    /// Type ids in breadth-first order; entry 0 is the root.
    std::vector<std::string> types;
    /// Parent index per type (the root points to itself).
    std::vector<std::size_t> parent;
    tokenizer::GeneVocab vocab;
    /// Natural-log mean expression profile per type, before batch effects.
    std::vector<std::vector<double>> log_means;
    /// Signature genes (token ids) per type, up-shifted relative to the parent.
    std::vector<std::vector<tokenizer::TokenId>> signatures;
    std::vector<tokenizer::ExpressionProfile> cells;

    /// "child<TAB>parent" per edge.
    std::string ontology_text() const;
    /// "type<TAB>gene" per signature gene.
    std::string markers_text() const;
};

/// Deterministic in `options.seed`. Throws Error(InvalidArgument) on non-positive sizes.
SyntheticWorld gen_synthetic(const SyntheticOptions& options);

} // namespace cellokit::synthetic
