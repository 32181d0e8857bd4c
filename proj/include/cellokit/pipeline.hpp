#pragma once

#include "cellokit/config.hpp"
#include "cellokit/model.hpp"
#include "cellokit/ontology.hpp"
#include "cellokit/tokenizer.hpp"
#include "cellokit/trainer.hpp"

#include <functional>
#include <span>
#include <vector>

namespace cellokit::pipeline {

struct PretrainRun {
    model::ModelState state;
    tokenizer::NormalizationFactors factors;
    ontology::SimilarityTable table;
    std::vector<trainer::LogRow> log;
    tokenizer::EncodeStats encode_stats;
};

/**
 * End-to-end pre-training on a labeled corpus: factors from the corpus,
 * rank-value encoding at `config.model.max_len`, a similarity table over the
 * cell types present (sorted ids, which also fix the type-table order), then
 * `trainer::pretrain`. Throws Error(UnknownNode) for a cell type missing from
 * the ontology.
 */
PretrainRun pretrain_corpus(const ontology::OntologyGraph& graph, const tokenizer::GeneVocab& vocab,
                            std::span<const tokenizer::ExpressionProfile> cells, const config::RunConfig& config,
                            const std::function<void(const trainer::LogRow&, const model::ModelState&)>& on_step = {});

} // namespace cellokit::pipeline
