// Acceptance checks 1-10. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails. Tolerances are fixed here, not tuned per run.

#include "oracles.hpp"

#include "cellokit/clustering.hpp"
#include "cellokit/config.hpp"
#include "cellokit/io.hpp"
#include "cellokit/losses.hpp"
#include "cellokit/metrics.hpp"
#include "cellokit/model.hpp"
#include "cellokit/ontology.hpp"
#include "cellokit/pipeline.hpp"
#include "cellokit/synthetic.hpp"
#include "cellokit/tasks.hpp"
#include "cellokit/tokenizer.hpp"
#include "cellokit/trainer.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include <unistd.h>

using namespace cellokit;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), f, v);
    return buf;
}

// 1. Power-iteration PPR against a dense solve on random undirected graphs.
Outcome ppr_oracle() {
    std::mt19937_64 rng(1);
    double worst_entry = 0.0;
    double worst_sum = 0.0;
    for (int g = 0; g < 100; ++g) {
        const std::size_t n = 2 + rng() % 49;
        const double p_edge = std::uniform_real_distribution<double>(0.02, 0.3)(rng);
        std::vector<std::pair<std::string, std::string>> edges;
        std::vector<std::string> names;
        for (std::size_t i = 0; i < n; ++i) names.push_back("n" + std::to_string(i));
        // Orienting every edge from the higher to the lower index keeps the stored graph acyclic.
        for (std::size_t i = 1; i < n; ++i) {
            for (std::size_t j = 0; j < i; ++j) {
                if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p_edge) edges.emplace_back(names[i], names[j]);
            }
        }
        const auto graph = ontology::OntologyGraph::from_edges(edges, names);
        std::vector<std::vector<std::size_t>> adj(n);
        for (const auto& [c, p] : edges) {
            const auto u = graph.index(c), v = graph.index(p);
            adj[u].push_back(v);
            adj[v].push_back(u);
        }
        for (std::size_t s = 0; s < n; ++s) {
            const auto ppr = ontology::compute_ppr(graph, s);
            const auto exact = oracle::ppr_dense(adj, s, 0.9);
            double sum = 0.0;
            for (std::size_t v = 0; v < n; ++v) {
                worst_entry = std::max(worst_entry, std::abs(ppr.scores[v] - exact[v]));
                sum += ppr.scores[v];
            }
            worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
        }
    }
    return {worst_entry <= 1e-8 && worst_sum <= 1e-9,
            "max |ppr - solve| = " + fmt("%.2e", worst_entry) + ", max |sum - 1| = " + fmt("%.2e", worst_sum)};
}

// 2. Similarity-level transform: hand table, monotonicity, level range on a random tree.
Outcome similarity_levels() {
    const double s = 1e-4;
    const bool table_ok = ontology::transform_similarity(5e-5, s) == 1 && ontology::transform_similarity(1e-4, s) == 1 &&
                          ontology::transform_similarity(3e-4, s) == 2 && ontology::transform_similarity(0.2047, s) == 11;
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> logu(-8.0, 0.0);
    bool monotone = true;
    for (int i = 0; i < 10000; ++i) {
        double a = std::pow(10.0, logu(rng)), b = std::pow(10.0, logu(rng));
        if (a > b) std::swap(a, b);
        monotone = monotone && ontology::transform_similarity(a, s) <= ontology::transform_similarity(b, s);
    }
    std::vector<std::pair<std::string, std::string>> edges;
    for (std::size_t t = 1; t < 100; ++t) {
        edges.emplace_back("t" + std::to_string(t), "t" + std::to_string(rng() % t));
    }
    const auto graph = ontology::OntologyGraph::from_edges(edges);
    std::vector<std::size_t> all(graph.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    const auto table = ontology::build_similarity_table(graph, all);
    int max_level = 0;
    for (auto u : all) {
        for (auto v : all) max_level = std::max(max_level, table.level(u, v));
    }
    return {table_ok && monotone && max_level >= 8 && max_level <= 12,
            std::string("hand table ") + (table_ok ? "ok" : "WRONG") + ", monotone " + (monotone ? "yes" : "NO") +
                ", max level on 100-node tree = " + std::to_string(max_level)};
}

// Six encoded cells of a 7-type binary tree, for gradient checks.
struct FixtureBatch {
    synthetic::SyntheticWorld world;
    ontology::OntologyGraph graph;
    ontology::SimilarityTable table;
    ontology::AncestorSets ancestors;
    losses::PretrainBatch batch;
    model::ModelState state;
};

FixtureBatch make_fixture() {
    FixtureBatch f;
    synthetic::SyntheticOptions o;
    o.n_types = 7;
    o.n_genes = 40;
    o.cells_per_type = 2;
    o.seed = 3;
    f.world = synthetic::gen_synthetic(o);
    f.graph = ontology::OntologyGraph::parse(f.world.ontology_text());
    std::vector<std::size_t> nodes(f.graph.size());
    std::iota(nodes.begin(), nodes.end(), std::size_t{0});
    f.table = ontology::build_similarity_table(f.graph, nodes);
    f.ancestors = ontology::AncestorSets(f.graph);
    const auto factors = tokenizer::compute_factors(f.world.cells, f.world.vocab.n_genes());
    const std::vector<std::size_t> picks{2, 4, 6, 8, 10, 3};
    model::ModelConfig mc;
    mc.n_layers = 2;
    mc.embed_dim = 32;
    mc.n_heads = 2;
    mc.ffn_dim = 64;
    mc.max_len = 16;
    mc.dropout = 0.0;
    mc.vocab_size = f.world.vocab.size();
    mc.seed = 5;
    f.state = model::ModelState(mc, f.world.types);
    for (std::size_t k = 0; k < picks.size(); ++k) {
        const auto& cell = f.world.cells[picks[k]];
        const auto seq = tokenizer::encode_cell(cell, f.world.vocab, factors, mc.max_len);
        f.batch.cells.push_back(tokenizer::apply_masking(seq, f.world.vocab, 0.3, 100 + k));
        f.batch.type_rows.push_back(f.state.type_index(cell.cell_type));
        f.batch.type_nodes.push_back(f.graph.index(cell.cell_type));
    }
    return f;
}

// 3. Finite-difference gradient checks of every loss component and the total.
Outcome gradient_correctness() {
    auto f = make_fixture();
    losses::ObjectiveContext ctx;
    ctx.table = &f.table;
    ctx.ancestors = &f.ancestors;
    std::vector<ad::Parameter*> params;
    for (auto& p : f.state.parameters()) params.push_back(&p);
    const std::vector<std::pair<std::string, ad::Var losses::Objective::*>> parts{
        {"mgp", &losses::Objective::mgp}, {"intra", &losses::Objective::intra}, {"reg", &losses::Objective::reg},
        {"inter", &losses::Objective::inter}, {"total", &losses::Objective::total}};
    bool ok = true;
    std::string detail;
    for (const auto& [name, member] : parts) {
        const auto r = losses::grad_check(
            [&, member = member](ad::Tape& tape) { return losses::total_loss(tape, f.state, f.batch, ctx).*member; }, params, 1e-4,
            400, 7);
        ok = ok && r.max_relative_error < 1e-4;
        detail += name + "=" + fmt("%.1e", r.max_relative_error) + " ";
    }
    return {ok, "max relative error: " + detail};
}

// 4. Degenerate batches give exact zeros.
Outcome degenerate_identities() {
    auto f = make_fixture();
    std::mt19937_64 rng(4);
    std::normal_distribution<double> normal;
    auto unit_rows = [&](std::size_t n, std::size_t d) {
        ad::Matrix m(n, d);
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (double& v : m.row(i)) {
                v = normal(rng);
                s += v * v;
            }
            for (double& v : m.row(i)) v /= std::sqrt(s);
        }
        return m;
    };
    const std::size_t d = 8;
    const auto z1 = unit_rows(1, d), h1 = unit_rows(1, d);
    const double intra_b1 = losses::loss_intra(z1, h1, 0.1);
    const double inter_b1 = losses::loss_inter(z1, {f.graph.index(f.world.types[3])}, f.table, f.ancestors, 0.1);
    const auto z4 = unit_rows(4, d);
    const std::size_t t = f.graph.index(f.world.types[5]);
    const double inter_single = losses::loss_inter(z4, {t, t, t, t}, f.table, f.ancestors, 0.1);
    ad::Matrix identity(d, d), zero_bias(1, d);
    for (std::size_t i = 0; i < d; ++i) identity(i, i) = 1.0;
    const double reg_identity = losses::loss_reg(z4, z4, identity, zero_bias);

    // The same identities through the tape-based objective on a one-cell batch.
    losses::ObjectiveContext ctx;
    ctx.table = &f.table;
    ctx.ancestors = &f.ancestors;
    losses::PretrainBatch one;
    one.cells = {f.batch.cells[0]};
    one.type_rows = {f.batch.type_rows[0]};
    one.type_nodes = {f.batch.type_nodes[0]};
    ad::Tape tape(false);
    const auto obj = losses::total_loss(tape, f.state, one, ctx);

    const bool ok = intra_b1 == 0.0 && inter_b1 == 0.0 && inter_single == 0.0 && reg_identity == 0.0 &&
                    obj.breakdown.intra == 0.0 && obj.breakdown.inter == 0.0;
    return {ok, "B=1 intra " + fmt("%g", intra_b1) + ", inter " + fmt("%g", inter_b1) + "; single-type inter " +
                    fmt("%g", inter_single) + "; identity reg " + fmt("%g", reg_identity) + "; objective B=1 intra " +
                    fmt("%g", obj.breakdown.intra) + ", inter " + fmt("%g", obj.breakdown.inter)};
}

// 5. Aggregation arithmetic and two metric anchors.
Outcome metric_anchors() {
    metrics::MetricReport parts;
    parts.set("ASW_b", 0.834);
    parts.set("GraphConn", 0.697);
    parts.set("AvgBio", 0.670);
    const auto agg = metrics::aggregate(parts);
    const double avg_batch = agg.get("AvgBatch"), overall = agg.get("Overall");
    const std::vector<std::size_t> a{0, 0, 1, 1}, b{0, 1, 0, 1};
    const double ari = metrics::ari(a, b);
    std::mt19937_64 rng(5);
    bool invariant = true;
    for (int r = 0; r < 100; ++r) {
        const std::size_t n = 5 + rng() % 60, ka = 1 + rng() % 6, kb = 1 + rng() % 6;
        std::vector<std::size_t> x(n), y(n);
        for (auto& v : x) v = rng() % ka;
        for (auto& v : y) v = rng() % kb;
        std::vector<std::size_t> perm(ka);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<std::size_t> xp(n);
        for (std::size_t i = 0; i < n; ++i) xp[i] = perm[x[i]] + 7;
        invariant = invariant && std::abs(metrics::nmi(x, y) - metrics::nmi(xp, y)) <= 1e-12 &&
                    std::abs(metrics::nmi(x, y) - metrics::nmi(y, x)) <= 1e-12;
    }
    // The bounds are inclusive; the exact AvgBatch 0.7655 sits on its bound, so allow rounding of the subtraction.
    const double slack = 1e-12;
    const bool ok = std::abs(avg_batch - 0.766) <= 0.0005 + slack && std::abs(overall - 0.708) <= 0.0005 + slack && ari == -0.5 &&
                    invariant;
    return {ok, "AvgBatch " + fmt("%.5f", avg_batch) + ", Overall " + fmt("%.5f", overall) + ", ari " + fmt("%g", ari) +
                    ", nmi relabel invariance " + (invariant ? "holds" : "BROKEN")};
}

// 6. Louvain reaches the exhaustive maximum on small fixtures.
Outcome louvain_oracle() {
    std::vector<std::pair<std::string, std::vector<std::pair<std::size_t, std::size_t>>>> fixtures;
    {
        std::vector<std::pair<std::size_t, std::size_t>> e;
        for (std::size_t base : {0u, 4u}) {
            for (std::size_t i = 0; i < 4; ++i)
                for (std::size_t j = i + 1; j < 4; ++j) e.emplace_back(base + i, base + j);
        }
        e.emplace_back(3, 4);
        fixtures.emplace_back("two 4-cliques", e);
    }
    for (std::size_t n = 2; n <= 8; ++n) {
        std::vector<std::pair<std::size_t, std::size_t>> k, p;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) k.emplace_back(i, j);
        for (std::size_t i = 0; i + 1 < n; ++i) p.emplace_back(i, i + 1);
        fixtures.emplace_back("K" + std::to_string(n), k);
        fixtures.emplace_back("P" + std::to_string(n), p);
    }
    bool ok = true;
    std::string failures;
    for (const auto& [name, edges] : fixtures) {
        std::size_t n = 0;
        for (auto [u, v] : edges) n = std::max({n, u + 1, v + 1});
        std::vector<std::vector<double>> a(n, std::vector<double>(n, 0.0));
        for (auto [u, v] : edges) a[u][v] = a[v][u] = 1.0;
        double best = -1e300;
        oracle::for_each_partition(n, [&](const std::vector<std::size_t>& c) { best = std::max(best, oracle::modularity_direct(a, c, 1.0)); });
        const auto part = clustering::louvain(clustering::from_edges(n, edges), 1.0);
        const double got = oracle::modularity_direct(a, part.assignment, 1.0);
        if (std::abs(got - best) > 1e-12) {
            ok = false;
            failures += " " + name + "(" + fmt("%.6f", got) + " < " + fmt("%.6f", best) + ")";
        }
    }
    return {ok, std::to_string(fixtures.size()) + " fixtures" + (ok ? ", all at the exhaustive optimum" : ";" + failures)};
}

config::RunConfig acceptance_run_config(std::uint64_t seed) {
    config::RunConfig cfg;
    cfg.train.total_steps = 500;
    cfg.train.warmup_steps = 50;
    cfg.train.seed = seed;
    cfg.model.seed = seed;
    return cfg;
}

double zero_shot_avgbio(const synthetic::SyntheticWorld& world, const config::RunConfig& cfg) {
    const auto graph = ontology::OntologyGraph::parse(world.ontology_text());
    const auto run = pipeline::pretrain_corpus(graph, world.vocab, world.cells, cfg);
    const tasks::Encoding enc{&world.vocab, &run.factors, cfg.model.max_len};
    const auto z = tasks::embed_corpus(run.state, world.cells, enc);
    std::vector<std::string> types;
    for (const auto& c : world.cells) types.push_back(c.cell_type);
    return tasks::zero_shot_eval(z, types).get("AvgBio");
}

// 7. Full objective beats the masked-gene-only ablation on zero-shot AvgBio.
Outcome directional_claim() {
    double margin_sum = 0.0;
    bool all_greater = true;
    std::string detail;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        synthetic::SyntheticOptions o;
        o.seed = seed;
        const auto world = synthetic::gen_synthetic(o);
        auto full = acceptance_run_config(seed);
        auto mgp = full;
        mgp.objective.weights = {1.0, 0.0, 0.0, 0.0};
        const double a = zero_shot_avgbio(world, full), b = zero_shot_avgbio(world, mgp);
        all_greater = all_greater && a > b;
        margin_sum += a - b;
        detail += "seed " + std::to_string(seed) + ": " + fmt("%.4f", a) + " vs " + fmt("%.4f", b) + "; ";
    }
    const double margin = margin_sum / 3.0;
    return {all_greater && margin >= 0.03, detail + "mean margin " + fmt("%.4f", margin)};
}

// 8. Novel cell types: four held-out types, 20 sampled query sets, accuracy above twice chance.
Outcome novel_generalization() {
    synthetic::SyntheticOptions o;
    o.seed = 1;
    const auto world = synthetic::gen_synthetic(o);
    const auto graph = ontology::OntologyGraph::parse(world.ontology_text());
    // Leaves with pairwise distinct PPR rows: sibling leaves would be indistinguishable by construction.
    const std::vector<std::string> held_out{world.types[6], world.types[7], world.types[9], world.types[11]};
    const std::set<std::string> held(held_out.begin(), held_out.end());
    std::vector<tokenizer::ExpressionProfile> train, query;
    for (const auto& c : world.cells) (held.count(c.cell_type) ? query : train).push_back(c);

    const auto cfg = acceptance_run_config(1);
    const auto run = pipeline::pretrain_corpus(graph, world.vocab, train, cfg);
    const tasks::Encoding enc{&world.vocab, &run.factors, cfg.model.max_len};
    const auto z_train = tasks::embed_corpus(run.state, train, enc);
    const auto z_query = tasks::embed_corpus(run.state, query, enc);
    std::vector<std::string> train_types;
    for (const auto& c : train) train_types.push_back(c.cell_type);

    const auto sets = tasks::sample_difficulty(held_out, 1.0, 20, 8);
    double acc_sum = 0.0;
    for (std::size_t r = 0; r < sets.size(); ++r) {
        // Each repeat draws a 10% profile subsample and half of every held-out type's cells.
        const auto profiles = tasks::build_type_profiles(z_train, train_types, 0.1, r);
        const auto task = tasks::make_novel_task(graph, profiles.types, sets[r]);
        std::vector<std::size_t> rows;
        for (const auto& t : sets[r]) {
            std::vector<std::size_t> members;
            for (std::size_t i = 0; i < query.size(); ++i)
                if (query[i].cell_type == t) members.push_back(i);
            std::mt19937_64 rng(trainer::mix_seed(r, rows.size()));
            std::shuffle(members.begin(), members.end(), rng);
            members.resize(members.size() / 2);
            rows.insert(rows.end(), members.begin(), members.end());
        }
        ad::Matrix q(rows.size(), z_query.cols);
        for (std::size_t i = 0; i < rows.size(); ++i) std::copy_n(z_query.row(rows[i]).begin(), z_query.cols, q.row(i).begin());
        const auto preds = tasks::novel_celltype_classify(q, profiles, task);
        std::size_t hit = 0;
        for (std::size_t i = 0; i < rows.size(); ++i) hit += preds[i].type == query[rows[i]].cell_type;
        acc_sum += static_cast<double>(hit) / static_cast<double>(rows.size());
    }
    const double acc = acc_sum / static_cast<double>(sets.size());
    return {acc > 0.5, "mean accuracy " + fmt("%.4f", acc) + " over " + std::to_string(sets.size()) + " query sets (chance 0.25)"};
}

// 9. Masking frequencies against binomial bounds.
Outcome masking_distribution() {
    std::vector<std::string> genes;
    for (int g = 0; g < 1000; ++g) genes.push_back("g" + std::to_string(g));
    const tokenizer::GeneVocab vocab(genes);
    const std::size_t len = 101;
    std::size_t maskable = 0, selected = 0, masked = 0, random = 0, kept = 0;
    for (std::uint64_t s = 0; maskable < 100000; ++s) {
        tokenizer::TokenSequence seq;
        seq.tokens.push_back(vocab.cls());
        for (std::size_t i = 1; i < len; ++i) seq.tokens.push_back(static_cast<tokenizer::TokenId>((s * 7 + i * 13) % 1000));
        seq.true_length = len;
        const auto m = tokenizer::apply_masking(seq, vocab, 0.15, s);
        maskable += len - 1;
        for (std::size_t pos : m.selected) {
            ++selected;
            if (m.tokens[pos] == vocab.mask()) ++masked;
            else if (m.tokens[pos] == seq.tokens[pos]) ++kept;
            else ++random;
        }
    }
    auto within = [](std::size_t k, std::size_t n, double p) {
        const double sigma = std::sqrt(p * (1.0 - p) / static_cast<double>(n));
        return std::abs(static_cast<double>(k) / static_cast<double>(n) - p) <= 3.0 * sigma;
    };
    const bool ok = within(selected, maskable, 0.15) && within(masked, selected, 0.8) && within(random, selected, 0.1) &&
                    within(kept, selected, 0.1);
    auto frac = [](std::size_t k, std::size_t n) { return fmt("%.4f", static_cast<double>(k) / static_cast<double>(n)); };
    return {ok, std::to_string(maskable) + " maskable: select " + frac(selected, maskable) + ", mask " + frac(masked, selected) +
                    ", random " + frac(random, selected) + ", keep " + frac(kept, selected)};
}

// 10. Two CLI pre-training runs produce identical bytes.
Outcome reproducibility(const std::string& cli) {
    const fs::path root = fs::temp_directory_path() / ("cellokit-accept-" + std::to_string(::getpid()));
    fs::remove_all(root);
    auto run = [&](const std::string& args) { return std::system((cli + " " + args + " > /dev/null 2>&1").c_str()); };
    const std::string data = (root / "data").string();
    if (run("gen-data --out " + data + " --seed 4 --n-types 6 --cells-per-type 20") != 0) return {false, "gen-data failed"};
    const std::string common = " --ontology " + data + "/ontology.tsv --expression " + data + "/expression.tsv --metadata " + data +
                               "/metadata.tsv --vocab " + data + "/vocab.txt --steps 60 --warmup-steps 6 --seed 11";
    for (const char* dir : {"a", "b"}) {
        if (run("pretrain" + common + " --out " + (root / dir).string()) != 0) return {false, "pretrain failed"};
    }
    const bool ckpt = io::read_file(root / "a/model.ckpt") == io::read_file(root / "b/model.ckpt");
    const bool log = io::read_file(root / "a/loss.tsv") == io::read_file(root / "b/loss.tsv");
    fs::remove_all(root);
    return {ckpt && log, std::string("checkpoint ") + (ckpt ? "identical" : "DIFFERS") + ", loss log " + (log ? "identical" : "DIFFERS")};
}

} // namespace

int main(int argc, char** argv) {
    const std::string cli = argc > 1 ? argv[1] : "cellokit";
    std::set<int> only;
    for (int i = 2; i < argc; ++i) only.insert(std::atoi(argv[i]));
    const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
        {1, ppr_oracle},
        {2, similarity_levels},
        {3, gradient_correctness},
        {4, degenerate_identities},
        {5, metric_anchors},
        {6, louvain_oracle},
        {7, directional_claim},
        {8, novel_generalization},
        {9, masking_distribution},
        {10, [&] { return reproducibility(cli); }},
    };
    int failures = 0;
    for (const auto& [id, check] : criteria) {
        if (!only.empty() && !only.count(id)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = check();
        } catch (const std::exception& e) {
            out = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("criterion %d: %s (%.1fs) %s\n", id, out.pass ? "PASS" : "FAIL", secs, out.detail.c_str());
        std::fflush(stdout);
        failures += !out.pass;
    }
    return failures == 0 ? 0 : 1;
}
