#include "cellokit/pipeline.hpp"
#include "cellokit/error.hpp"

#include <algorithm>

namespace cellokit::pipeline {

PretrainRun pretrain_corpus(const ontology::OntologyGraph& graph, const tokenizer::GeneVocab& vocab,
                            std::span<const tokenizer::ExpressionProfile> cells, const config::RunConfig& config,
                            const std::function<void(const trainer::LogRow&, const model::ModelState&)>& on_step) {
    if (cells.empty()) {
        throw Error(ErrorKind::EmptyCorpus, "no cells to pre-train on");
    }
    std::vector<std::string> type_ids;
    for (const auto& c : cells) {
        type_ids.push_back(c.cell_type);
    }
    std::sort(type_ids.begin(), type_ids.end());
    type_ids.erase(std::unique(type_ids.begin(), type_ids.end()), type_ids.end());
    std::vector<std::size_t> type_nodes;
    for (const auto& t : type_ids) {
        type_nodes.push_back(graph.index(t));
    }

    PretrainRun run;
    run.factors = tokenizer::compute_factors(cells, vocab.n_genes());
    run.table = ontology::build_similarity_table(graph, type_nodes, config.ppr, config.threshold);
    const ontology::AncestorSets ancestors(graph);

    trainer::PretrainData data;
    for (const auto& c : cells) {
        data.sequences.push_back(tokenizer::encode_cell(c, vocab, run.factors, config.model.max_len, &run.encode_stats));
        const auto row = static_cast<std::size_t>(std::lower_bound(type_ids.begin(), type_ids.end(), c.cell_type) - type_ids.begin());
        data.type_rows.push_back(row);
        data.type_nodes.push_back(type_nodes[row]);
    }

    model::ModelConfig mc = config.model;
    mc.vocab_size = vocab.size();
    run.state = model::ModelState(mc, type_ids);

    losses::ObjectiveContext ctx;
    ctx.table = &run.table;
    ctx.ancestors = &ancestors;
    ctx.options = config.objective;
    run.log = trainer::pretrain(run.state, data, vocab, ctx, config.train, [&](const trainer::LogRow& row) {
        if (on_step) {
            on_step(row, run.state);
        }
    });
    return run;
}

} // namespace cellokit::pipeline
