#include "cellokit/error.hpp"
#include "cellokit/metrics.hpp"
#include "cellokit/synthetic.hpp"
#include "cellokit/tasks.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace cellokit;
using ad::Matrix;

namespace {

tokenizer::GeneVocab vocab_of(std::size_t n) {
    std::vector<std::string> genes;
    for (std::size_t g = 0; g < n; ++g) genes.push_back("g" + std::to_string(g));
    return tokenizer::GeneVocab(genes);
}

model::ModelConfig tiny(std::size_t vocab, std::size_t max_len) {
    model::ModelConfig c;
    c.vocab_size = vocab;
    c.max_len = max_len;
    c.embed_dim = 16;
    c.ffn_dim = 32;
    c.n_layers = 1;
    c.seed = 8;
    return c;
}

// Well-separated unit clusters: row i belongs to type i % k.
std::pair<Matrix, std::vector<std::string>> separable(std::mt19937_64& rng, std::size_t n, std::size_t k, double noise) {
    std::normal_distribution<double> g(0.0, noise);
    Matrix m(n, k + 2);
    std::vector<std::string> types(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (double& v : m.row(i)) v = g(rng);
        m(i, i % k) += 1.0;
        types[i] = "t" + std::to_string(i % k);
    }
    return {m, types};
}

synthetic::SyntheticWorld world(double signal, std::uint64_t seed = 5) {
    synthetic::SyntheticOptions o;
    o.n_types = 12;
    o.n_genes = 80;
    o.cells_per_type = 20;
    o.signal_strength = signal;
    o.seed = seed;
    return synthetic::gen_synthetic(o);
}

// log1p of library-normalized counts, one row per cell.
Matrix expression_matrix(const synthetic::SyntheticWorld& w, const std::vector<std::size_t>& rows) {
    Matrix m(rows.size(), w.vocab.n_genes());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        double total = 0.0;
        for (auto [g, c] : w.cells[rows[r]].counts) total += static_cast<double>(c);
        for (auto [g, c] : w.cells[rows[r]].counts) m(r, g) = std::log1p(1e3 * static_cast<double>(c) / total);
    }
    return m;
}

} // namespace

TEST_CASE("encode_labels sorts names") {
    const auto c = tasks::encode_labels({"b", "a", "b", "c"});
    CHECK(c.names == std::vector<std::string>{"a", "b", "c"});
    CHECK(c.codes == std::vector<std::size_t>{1, 0, 1, 2});
}

TEST_CASE("embed_corpus") {
    const auto v = vocab_of(30);
    const model::ModelState state(tiny(v.size(), 12), {"A"});
    std::mt19937_64 rng(51);
    std::vector<tokenizer::ExpressionProfile> cells(40);
    for (std::size_t i = 0; i < cells.size(); ++i) {
        for (tokenizer::TokenId g = 0; g < 30; ++g) {
            if (rng() % 3 == 0) cells[i].counts.emplace_back(g, 1 + rng() % 20);
        }
    }
    cells[7] = cells[3];
    const auto f = tokenizer::compute_factors(cells, v.n_genes());
    const tasks::Encoding enc{&v, &f, 12};
    const auto a = tasks::embed_corpus(state, cells, enc, 1);
    const auto b = tasks::embed_corpus(state, cells, enc, 32);
    CHECK(a.data == b.data);
    CHECK(std::equal(a.row(3).begin(), a.row(3).end(), a.row(7).begin()));
    CHECK(tasks::embed_corpus(state, std::span<const tokenizer::ExpressionProfile>{}, enc).rows == 0);
}

TEST_CASE("zero-shot evaluation") {
    std::mt19937_64 rng(52);
    auto [emb, types] = separable(rng, 500, 5, 0.02);
    const auto r = tasks::zero_shot_eval(emb, types);
    CHECK(r.get("AvgBio") > 0.95);
    CHECK(r.get("AvgBio") == doctest::Approx((r.get("NMI") + r.get("ARI") + r.get("ASW")) / 3.0));
    std::shuffle(types.begin(), types.end(), rng);
    CHECK(tasks::zero_shot_eval(emb, types).get("AvgBio") < 0.3);
}

TEST_CASE("batch integration evaluation") {
    std::mt19937_64 rng(53);
    auto [emb, types] = separable(rng, 2000, 4, 0.05);
    const auto confounded = tasks::batch_integration_eval(emb, types, types);
    CHECK(confounded.get("ASW_b") < 0.1);
    std::vector<std::string> batches(types.size());
    for (auto& b : batches) b = rng() % 2 ? "b1" : "b2";
    const auto mixed = tasks::batch_integration_eval(emb, types, batches);
    CHECK(std::abs(mixed.get("ASW_b") - 1.0) <= 0.05);
    CHECK(mixed.get("Overall") == doctest::Approx(0.6 * mixed.get("AvgBio") + 0.4 * mixed.get("AvgBatch")));
    CHECK(mixed.get("AvgBatch") == doctest::Approx((mixed.get("ASW_b") + mixed.get("GraphConn")) / 2.0));
}

TEST_CASE("type profiles") {
    Matrix e(4, 2);
    e.data = {1.0, 0.0, 0.0, 1.0, 3.0, 0.0, 0.0, -1.0};
    const auto p = tasks::build_type_profiles(e, {"b", "a", "b", "a"});
    CHECK(p.types == std::vector<std::string>{"a", "b"});
    CHECK(p.of("b")[0] == doctest::Approx(1.0));
    CHECK(p.of("b")[1] == doctest::Approx(0.0));
    CHECK_THROWS_AS(p.of("c"), Error);
    // A subsample of 1 cell (ceil(0.1 * 2)) is one of the two cells, renormalized.
    const auto s = tasks::build_type_profiles(e, {"b", "b", "b", "b"}, 0.1, 3);
    const double n = std::hypot(s.of("b")[0], s.of("b")[1]);
    CHECK(n == doctest::Approx(1.0));
}

TEST_CASE("novel cell type classification") {
    // R with known children K1 K2 K3; unknown V1 under K1 and V2 under K3.
    const auto g = ontology::OntologyGraph::parse("K1 R\nK2 R\nK3 R\nV1 K1\nV2 K3\n");
    const auto task = tasks::make_novel_task(g, {"K3", "K1", "K2"}, {"V1", "V2"});
    CHECK(task.known == std::vector<std::string>{"K1", "K2", "K3"});
    const auto& row1 = task.ppr_rows.at("V1");
    CHECK(row1[0] > row1[1]);
    CHECK(row1[0] > row1[2]);

    Matrix e(3, 3);
    e.data = {1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0};
    const auto profiles = tasks::build_type_profiles(e, {"K1", "K2", "K3"});
    Matrix q(2, 3);
    q.data = {1.0, 0.0, 0.0, 0.0, 0.0, 1.0};
    for (auto align : {tasks::Alignment::Spearman, tasks::Alignment::Cosine}) {
        const auto p = tasks::novel_celltype_classify(q, profiles, task, align);
        CHECK(p[0].type == "V1");
        CHECK(p[1].type == "V2");
    }

    // Spearman alignment depends on ranks only.
    auto transformed = task;
    for (auto& [k, row] : transformed.ppr_rows) {
        for (double& x : row) x = std::sqrt(x) * 7.0 + 1.0;
    }
    std::mt19937_64 rng(54);
    Matrix many(30, 3);
    for (double& x : many.data) x = std::normal_distribution<double>()(rng);
    const auto a = tasks::novel_celltype_classify(many, profiles, task);
    const auto b = tasks::novel_celltype_classify(many, profiles, transformed);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].type == b[i].type);

    const auto single = tasks::make_novel_task(g, {"K1", "K2", "K3"}, {"V2"});
    for (const auto& p : tasks::novel_celltype_classify(many, profiles, single)) CHECK(p.type == "V2");

    CHECK_THROWS_AS(tasks::make_novel_task(g, {"K1"}, {"K1"}), Error);
    CHECK_THROWS_AS(tasks::make_novel_task(g, {"K1"}, {"Z"}), Error);
    auto empty = task;
    empty.unknown.clear();
    CHECK_THROWS_AS(tasks::novel_celltype_classify(q, profiles, empty), Error);
    auto missing = task;
    missing.ppr_rows.erase("V2");
    CHECK_THROWS_AS(tasks::novel_celltype_classify(q, profiles, missing), Error);
}

TEST_CASE("sample_difficulty") {
    std::vector<std::string> pool;
    for (int i = 0; i < 87; ++i) pool.push_back("t" + std::to_string(i));
    const auto s = tasks::sample_difficulty(pool, 0.10, 20, 1);
    REQUIRE(s.size() == 20);
    for (const auto& set : s) {
        CHECK(set.size() == 9);
        CHECK(std::is_sorted(set.begin(), set.end()));
        CHECK(std::adjacent_find(set.begin(), set.end()) == set.end());
    }
    CHECK(tasks::sample_difficulty(pool, 0.10, 20, 1) == s);
    auto sorted = pool;
    std::sort(sorted.begin(), sorted.end());
    CHECK(tasks::sample_difficulty(pool, 1.0, 1, 1)[0] == sorted);
}

TEST_CASE("knockout") {
    const auto v = vocab_of(6);
    std::mt19937_64 rng(55);
    Matrix table(v.size(), 3);
    for (double& x : table.data) x = std::normal_distribution<double>()(rng);
    // Toy embedder: mean embedding of the unmasked gene tokens.
    const tasks::Embedder toy = [&](std::span<const tokenizer::TokenSequence> seqs) {
        Matrix out(seqs.size(), 3);
        for (std::size_t s = 0; s < seqs.size(); ++s) {
            double n = 0.0;
            for (std::size_t p = 1; p < seqs[s].true_length; ++p) {
                const auto t = seqs[s].tokens[p];
                if (t == v.mask()) continue;
                for (std::size_t c = 0; c < 3; ++c) out(s, c) += table(t, c);
                n += 1.0;
            }
            for (double& x : out.row(s)) x /= n;
        }
        return out;
    };
    const tokenizer::TokenSequence seq{{v.cls(), 4, 0, 2, 5, v.pad()}, 5};
    const auto scores = tasks::knockout_scores(toy, seq, v, tasks::Impact::L2);
    REQUIRE(scores.size() == 4);
    std::vector<double> mean(3, 0.0);
    for (tokenizer::TokenId t : {4, 0, 2, 5}) {
        for (std::size_t c = 0; c < 3; ++c) mean[c] += table(t, c) / 4.0;
    }
    for (const auto& s : scores) {
        CHECK(s.gene != 1);
        CHECK(s.gene != 3);
        double dev = 0.0;
        for (std::size_t c = 0; c < 3; ++c) dev += (table(s.gene, c) - mean[c]) * (table(s.gene, c) - mean[c]);
        CHECK(s.impact == doctest::Approx(std::sqrt(dev) / 3.0).epsilon(1e-12));
    }

    const model::ModelState state(tiny(v.size(), 8), {"A"});
    tokenizer::ExpressionProfile cell;
    cell.counts = {{0, 5}, {2, 3}, {4, 9}};
    CHECK_THROWS_AS(tasks::knockout_scores(state, cell, tasks::Encoding{&v, nullptr, 8}), Error);
    const tokenizer::NormalizationFactors unit(std::vector<double>(v.n_genes(), 1.0));
    const tasks::Encoding enc{&v, &unit, 8};
    for (const auto& s : tasks::knockout_scores(state, cell, enc)) {
        CHECK(s.impact >= 0.0);
        CHECK(s.impact <= 2.0);
    }
}

TEST_CASE("marker evaluation") {
    const auto v = vocab_of(2000);
    std::mt19937_64 rng(56);
    tasks::MarkerSets markers;
    for (int g = 0; g < 200; ++g) markers["A"].insert("g" + std::to_string(g * 10));
    std::vector<tasks::GeneImpact> perfect, noise;
    for (tokenizer::TokenId g = 0; g < 2000; ++g) {
        perfect.push_back({g, g % 10 == 0 ? 1.0 + g : 0.5});
        noise.push_back({g, std::uniform_real_distribution<double>()(rng)});
    }
    const auto p = tasks::marker_eval({perfect}, {"A"}, markers, v);
    CHECK(p.auroc == 1.0);
    CHECK(p.per_type.size() == 1);
    CHECK(std::abs(tasks::marker_eval({noise}, {"A"}, markers, v).auroc - 0.5) <= 0.05);
    CHECK_THROWS_AS(tasks::marker_eval({perfect}, {"B"}, markers, v), Error);

    const auto parsed = tasks::parse_markers("# comment\nA\tg1\n\nA\tg2\nB\tg3\n");
    CHECK(parsed.at("A") == std::set<std::string>{"g1", "g2"});
    CHECK(parsed.at("B").size() == 1);
}

TEST_CASE("novel marker discovery") {
    const auto v = vocab_of(40);
    auto ramp = [](tokenizer::TokenId first) {
        std::vector<tasks::GeneImpact> s;
        for (tokenizer::TokenId g = first; g < first + 20; ++g) s.push_back({g, static_cast<double>(g)});
        return s;
    };
    SUBCASE("10% of 20 scored genes enter the count") {
        const auto c = tasks::novel_marker_discovery({ramp(0)}, {"A"}, {}, v);
        REQUIRE(c.size() == 2);
        CHECK(c[0].gene == "g19");
        CHECK(c[1].gene == "g18");
        CHECK(c[0].frequency == 1);
    }
    SUBCASE("known markers are never candidates") {
        const tasks::MarkerSets known{{"Z", {"g19"}}};
        const auto c = tasks::novel_marker_discovery({ramp(0)}, {"A"}, known, v);
        REQUIRE(c.size() == 2);
        CHECK(c[0].gene == "g18");
        CHECK(c[1].gene == "g17");
    }
    SUBCASE("genes listed for two types are dropped from both") {
        const auto c = tasks::novel_marker_discovery({ramp(0), ramp(1)}, {"A", "B"}, {}, v);
        for (const auto& m : c) CHECK(m.gene != "g19");
        CHECK(c.size() == 2);
    }
    CHECK(tasks::format_candidates({{"A", "g1", 3, 0.5}}) == "A\tg1\t3\t0.500000\n");
}

TEST_CASE("fine-tuning") {
    synthetic::SyntheticOptions o;
    o.n_types = 3;
    o.n_genes = 40;
    o.cells_per_type = 40;
    o.signal_strength = 3.0;
    o.seed = 9;
    const auto w = synthetic::gen_synthetic(o);
    const auto f = tokenizer::compute_factors(w.cells, w.vocab.n_genes());
    const tasks::Encoding enc{&w.vocab, &f, 16};
    std::vector<tokenizer::ExpressionProfile> train, val;
    std::vector<std::string> train_labels, val_labels;
    for (std::size_t i = 0; i < w.cells.size(); ++i) {
        if (w.cells[i].cell_type == w.types[0]) continue;
        auto& dst = (i % 4 == 0) ? val : train;
        (i % 4 == 0 ? val_labels : train_labels).push_back(w.cells[i].cell_type);
        dst.push_back(w.cells[i]);
    }
    const auto train_seqs = tasks::encode_corpus(train, enc), val_seqs = tasks::encode_corpus(val, enc);
    const model::ModelState base(tiny(w.vocab.size(), 16), {"x"});

    tasks::FinetuneOptions opt;
    opt.epochs = 0;
    const auto untrained = tasks::finetune_classifier(base, train_seqs, train_labels, val_seqs, val_labels, opt);
    CHECK(untrained.best_epoch == 0);
    const auto preds = untrained.classifier.predict(val_seqs);
    const auto codes = tasks::encode_labels(val_labels);
    CHECK(untrained.val_accuracy == doctest::Approx(metrics::accuracy(preds, codes.codes)));

    opt.epochs = 8;
    opt.batch_size = 16;
    opt.lr = 3e-3;
    opt.seed = 2;
    const auto tuned = tasks::finetune_classifier(base, train_seqs, train_labels, val_seqs, val_labels, opt);
    CHECK(tuned.val_accuracy == 1.0);
    CHECK(tuned.best_epoch >= 1);
    CHECK(tuned.best_epoch <= 8);
    const auto again = tasks::finetune_classifier(base, train_seqs, train_labels, val_seqs, val_labels, opt);
    CHECK(again.classifier.head_weight.value.data == tuned.classifier.head_weight.value.data);

    auto bad_labels = val_labels;
    bad_labels[0] = "never-seen";
    CHECK_THROWS_AS(tasks::finetune_classifier(base, train_seqs, train_labels, val_seqs, bad_labels, opt), Error);
}

TEST_CASE("synthetic generator") {
    const auto a = world(1.0), b = world(1.0);
    CHECK(a.ontology_text() == b.ontology_text());
    CHECK(a.markers_text() == b.markers_text());
    REQUIRE(a.cells.size() == b.cells.size());
    for (std::size_t i = 0; i < a.cells.size(); ++i) CHECK(a.cells[i].counts == b.cells[i].counts);
    CHECK(a.parent[7] == a.parent[8]);
    double siblings = 0.0, cousins = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto w = world(1.0, seed);
        siblings += metrics::pcc(w.log_means[7], w.log_means[8]);
        cousins += metrics::pcc(w.log_means[7], w.log_means[11]);
    }
    CHECK(siblings > cousins);

    synthetic::SyntheticOptions bad;
    bad.n_types = 0;
    CHECK_THROWS_AS(synthetic::gen_synthetic(bad), Error);
}

TEST_CASE("separation grows with signal strength") {
    std::vector<double> mean_bio;
    for (double signal : {0.0, 0.5, 1.5}) {
        double total = 0.0;
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto w = world(signal, seed);
            std::vector<std::size_t> rows(w.cells.size());
            std::iota(rows.begin(), rows.end(), std::size_t{0});
            std::vector<std::string> types;
            for (const auto& c : w.cells) types.push_back(c.cell_type);
            total += tasks::zero_shot_eval(expression_matrix(w, rows), types).get("AvgBio");
        }
        mean_bio.push_back(total / 5.0);
    }
    CHECK(mean_bio[0] < mean_bio[1]);
    CHECK(mean_bio[1] < mean_bio[2]);
}

TEST_CASE("zero signal makes types indistinguishable") {
    for (double signal : {0.0, 3.0}) {
        const auto w = world(signal);
        std::vector<std::size_t> rows;
        std::vector<std::string> types;
        for (std::size_t i = 0; i < w.cells.size(); ++i) {
            rows.push_back(i);
            types.push_back(w.cells[i].cell_type);
        }
        const auto bio = tasks::zero_shot_eval(expression_matrix(w, rows), types).get("AvgBio");
        if (signal == 0.0) {
            CHECK(bio < 0.3);
        } else {
            CHECK(bio > 0.5);
        }
    }
}
