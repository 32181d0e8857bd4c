#include "cellokit/tasks.hpp"
#include "cellokit/clustering.hpp"
#include "cellokit/error.hpp"
#include "cellokit/kernels.hpp"
#include "cellokit/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

namespace cellokit::tasks {

LabelCodes encode_labels(const std::vector<std::string>& labels) {
    LabelCodes out;
    out.names = labels;
    std::sort(out.names.begin(), out.names.end());
    out.names.erase(std::unique(out.names.begin(), out.names.end()), out.names.end());
    out.codes.reserve(labels.size());
    for (const auto& l : labels) {
        out.codes.push_back(static_cast<std::size_t>(std::lower_bound(out.names.begin(), out.names.end(), l) - out.names.begin()));
    }
    return out;
}

std::vector<tokenizer::TokenSequence> encode_corpus(std::span<const tokenizer::ExpressionProfile> profiles, const Encoding& enc,
                                                    tokenizer::EncodeStats* stats) {
    if (enc.vocab == nullptr || enc.factors == nullptr) {
        throw Error(ErrorKind::InvalidArgument, "encoding needs a vocabulary and normalization factors");
    }
    std::vector<tokenizer::TokenSequence> seqs;
    seqs.reserve(profiles.size());
    for (const auto& p : profiles) {
        seqs.push_back(tokenizer::encode_cell(p, *enc.vocab, *enc.factors, enc.context_length, stats));
    }
    return seqs;
}

ad::Matrix embed_corpus(const model::ModelState& state, std::span<const tokenizer::ExpressionProfile> profiles,
                        const Encoding& enc, std::size_t batch_size) {
    const auto seqs = encode_corpus(profiles, enc);
    return model::embed(state, seqs, batch_size);
}

metrics::MetricReport zero_shot_eval(const ad::Matrix& embeddings, const std::vector<std::string>& types, std::size_t k,
                                     std::uint64_t seed) {
    const auto labels = encode_labels(types);
    const auto knn = clustering::knn_graph(embeddings, k);
    const auto best = clustering::sweep(knn, labels.codes, seed);
    metrics::MetricReport report;
    report.set("NMI", best.best_nmi);
    report.set("ARI", metrics::ari(best.best.assignment, labels.codes));
    report.set("ASW", metrics::asw(embeddings, labels.codes));
    report = metrics::aggregate(report);
    report.set_provenance("k", std::to_string(k));
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", best.best.resolution);
    report.set_provenance("resolution", buf);
    report.set_provenance("n_cells", std::to_string(embeddings.rows));
    return report;
}

metrics::MetricReport batch_integration_eval(const ad::Matrix& embeddings, const std::vector<std::string>& types,
                                             const std::vector<std::string>& batches, std::size_t k, std::uint64_t seed) {
    auto report = zero_shot_eval(embeddings, types, k, seed);
    const auto type_codes = encode_labels(types);
    const auto batch_codes = encode_labels(batches);
    report.set("ASW_b", metrics::asw_batch(embeddings, type_codes.codes, batch_codes.codes));
    report.set("GraphConn", metrics::graph_conn(clustering::knn_graph(embeddings, k), type_codes.codes));
    return metrics::aggregate(report);
}

std::span<const double> TypeProfile::of(const std::string& type) const {
    const auto it = std::lower_bound(types.begin(), types.end(), type);
    if (it == types.end() || *it != type) {
        throw Error(ErrorKind::UnknownTypeId, "no profile for type " + type);
    }
    return profiles.row(static_cast<std::size_t>(it - types.begin()));
}

TypeProfile build_type_profiles(const ad::Matrix& embeddings, const std::vector<std::string>& types, double fraction,
                                std::uint64_t seed) {
    if (types.size() != embeddings.rows) {
        throw Error(ErrorKind::LengthMismatch, "one type per embedding row required");
    }
    if (!(fraction > 0.0 && fraction <= 1.0)) {
        throw Error(ErrorKind::InvalidArgument, "profile fraction must lie in (0, 1]");
    }
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < types.size(); ++i) {
        groups[types[i]].push_back(i);
    }
    TypeProfile out;
    out.profiles = ad::Matrix(groups.size(), embeddings.cols);
    std::size_t row = 0;
    for (auto& [type, members] : groups) {
        out.types.push_back(type);
        if (fraction < 1.0) {
            std::mt19937_64 rng(trainer::mix_seed(seed, row));
            std::shuffle(members.begin(), members.end(), rng);
            members.resize(static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(members.size()))));
        }
        auto dst = out.profiles.row(row);
        for (std::size_t i : members) {
            kernels::axpy(1.0, embeddings.row(i), dst);
        }
        const double norm = std::sqrt(kernels::dot(dst, dst));
        if (norm > 0.0) {
            for (double& v : dst) v /= norm;
        }
        ++row;
    }
    return out;
}

NovelTypeTask make_novel_task(const ontology::OntologyGraph& graph, std::vector<std::string> known,
                              std::vector<std::string> unknown, const ontology::PprOptions& ppr) {
    auto tidy = [](std::vector<std::string>& v) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
    };
    tidy(known);
    tidy(unknown);
    std::vector<std::string> overlap;
    std::set_intersection(known.begin(), known.end(), unknown.begin(), unknown.end(), std::back_inserter(overlap));
    if (!overlap.empty()) {
        throw Error(ErrorKind::InvalidArgument, "type " + overlap.front() + " is both known and unknown");
    }
    std::vector<std::size_t> unknown_idx;
    for (const auto& v : unknown) {
        unknown_idx.push_back(graph.index(v));
    }
    NovelTypeTask task;
    task.known = known;
    task.unknown = unknown;
    for (const auto& v : unknown) {
        task.ppr_rows[v].assign(known.size(), 0.0);
    }
    for (std::size_t ui = 0; ui < known.size(); ++ui) {
        const auto p = ontology::compute_ppr(graph, graph.index(known[ui]), ppr);
        for (std::size_t vi = 0; vi < unknown.size(); ++vi) {
            task.ppr_rows[unknown[vi]][ui] = p.scores[unknown_idx[vi]];
        }
    }
    return task;
}

namespace {

double cosine(std::span<const double> a, std::span<const double> b) {
    const double na = std::sqrt(kernels::dot(a, a));
    const double nb = std::sqrt(kernels::dot(b, b));
    if (na == 0.0 || nb == 0.0) {
        return 0.0;
    }
    return kernels::dot(a, b) / (na * nb);
}

double align(std::span<const double> a, std::span<const double> b, Alignment alignment) {
    if (alignment == Alignment::Cosine) {
        return cosine(a, b);
    }
    try {
        return metrics::spearman(a, b);
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::ZeroVariance) {
            return 0.0;
        }
        throw;
    }
}

} // namespace

std::vector<NovelPrediction> novel_celltype_classify(const ad::Matrix& queries, const TypeProfile& profiles,
                                                     const NovelTypeTask& task, Alignment alignment) {
    if (task.unknown.empty()) {
        throw Error(ErrorKind::EmptyUnknownSet, "no unknown types to predict");
    }
    std::vector<std::string> unknown = task.unknown;
    std::sort(unknown.begin(), unknown.end());
    std::vector<const std::vector<double>*> rows;
    for (const auto& v : unknown) {
        const auto it = task.ppr_rows.find(v);
        if (it == task.ppr_rows.end()) {
            throw Error(ErrorKind::MissingPPRRow, v);
        }
        if (it->second.size() != task.known.size()) {
            throw Error(ErrorKind::SizeMismatch, "PPR row of " + v + " does not cover the known types");
        }
        rows.push_back(&it->second);
    }
    std::vector<std::span<const double>> known_profiles;
    for (const auto& u : task.known) {
        known_profiles.push_back(profiles.of(u));
    }
    std::vector<NovelPrediction> out;
    out.reserve(queries.rows);
    std::vector<double> s(task.known.size());
    for (std::size_t q = 0; q < queries.rows; ++q) {
        for (std::size_t u = 0; u < known_profiles.size(); ++u) {
            s[u] = cosine(queries.row(q), known_profiles[u]);
        }
        NovelPrediction best{unknown.front(), align(s, *rows.front(), alignment)};
        for (std::size_t v = 1; v < unknown.size(); ++v) {
            const double score = align(s, *rows[v], alignment);
            if (score > best.score) {
                best = {unknown[v], score};
            }
        }
        out.push_back(best);
    }
    return out;
}

std::vector<std::vector<std::string>> sample_difficulty(const std::vector<std::string>& pool, double fraction, std::size_t n_repeats,
                                                        std::uint64_t seed) {
    if (pool.empty()) {
        throw Error(ErrorKind::EmptyUnknownSet, "empty pool of unknown types");
    }
    if (!(fraction > 0.0 && fraction <= 1.0)) {
        throw Error(ErrorKind::InvalidArgument, "difficulty fraction must lie in (0, 1]");
    }
    const auto size = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(fraction * static_cast<double>(pool.size()))),
                                              1, pool.size());
    std::vector<std::vector<std::string>> out;
    for (std::size_t r = 0; r < n_repeats; ++r) {
        auto subset = pool;
        std::mt19937_64 rng(trainer::mix_seed(seed, r));
        std::shuffle(subset.begin(), subset.end(), rng);
        subset.resize(size);
        std::sort(subset.begin(), subset.end());
        out.push_back(std::move(subset));
    }
    return out;
}

std::vector<GeneImpact> knockout_scores(const Embedder& embedder, const tokenizer::TokenSequence& seq,
                                        const tokenizer::GeneVocab& vocab, Impact metric) {
    std::vector<tokenizer::TokenSequence> batch{seq};
    std::vector<std::size_t> positions;
    for (std::size_t p = 0; p < seq.true_length; ++p) {
        if (vocab.is_gene(seq.tokens[p])) {
            positions.push_back(p);
            auto mutated = seq;
            mutated.tokens[p] = vocab.mask();
            batch.push_back(std::move(mutated));
        }
    }
    const ad::Matrix z = embedder(batch);
    std::vector<GeneImpact> out;
    out.reserve(positions.size());
    for (std::size_t i = 0; i < positions.size(); ++i) {
        double impact = 0.0;
        if (metric == Impact::Cosine) {
            impact = std::clamp(1.0 - cosine(z.row(0), z.row(i + 1)), 0.0, 2.0);
        } else {
            impact = std::sqrt(kernels::squared_distance(z.row(0), z.row(i + 1)));
        }
        out.push_back({seq.tokens[positions[i]], impact});
    }
    return out;
}

std::vector<GeneImpact> knockout_scores(const model::ModelState& state, const tokenizer::ExpressionProfile& profile,
                                        const Encoding& enc, Impact metric) {
    if (enc.vocab == nullptr || enc.factors == nullptr) {
        throw Error(ErrorKind::InvalidArgument, "encoding needs a vocabulary and normalization factors");
    }
    const auto seq = tokenizer::encode_cell(profile, *enc.vocab, *enc.factors, enc.context_length);
    const Embedder embedder = [&state](std::span<const tokenizer::TokenSequence> seqs) { return model::embed(state, seqs, 32); };
    return knockout_scores(embedder, seq, *enc.vocab, metric);
}

MarkerSets parse_markers(std::string_view text) {
    MarkerSets out;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        start = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty() || line.front() == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string_view::npos || line.find('\t', tab + 1) != std::string_view::npos || tab == 0 || tab + 1 == line.size()) {
            throw Error(ErrorKind::MalformedLine, "marker line " + std::to_string(line_no) + ": expected type<TAB>gene");
        }
        out[std::string(line.substr(0, tab))].insert(std::string(line.substr(tab + 1)));
    }
    return out;
}

namespace {

std::map<std::string, std::vector<std::size_t>> cells_by_type(const std::vector<std::vector<GeneImpact>>& cell_scores,
                                                              const std::vector<std::string>& types) {
    if (cell_scores.size() != types.size()) {
        throw Error(ErrorKind::LengthMismatch, "one type per scored cell required");
    }
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < types.size(); ++i) {
        groups[types[i]].push_back(i);
    }
    return groups;
}

} // namespace

MarkerEval marker_eval(const std::vector<std::vector<GeneImpact>>& cell_scores, const std::vector<std::string>& types,
                       const MarkerSets& markers, const tokenizer::GeneVocab& vocab) {
    MarkerEval out;
    for (const auto& [type, members] : cells_by_type(cell_scores, types)) {
        const auto mit = markers.find(type);
        if (mit == markers.end() || mit->second.empty()) {
            continue;
        }
        std::map<tokenizer::TokenId, double> sums;
        for (std::size_t c : members) {
            for (const auto& g : cell_scores[c]) {
                sums[g.gene] += g.impact;
            }
        }
        std::vector<double> scores;
        std::vector<int> positive;
        for (const auto& [gene, total] : sums) {
            scores.push_back(total / static_cast<double>(members.size()));
            positive.push_back(mit->second.count(vocab.gene(gene)) ? 1 : 0);
        }
        try {
            out.per_type.emplace_back(type, metrics::auroc(scores, positive));
        } catch (const Error& e) {
            throw Error(ErrorKind::OneClassOnly, "type " + type + ": scored genes are all markers or all non-markers");
        }
    }
    if (out.per_type.empty()) {
        throw Error(ErrorKind::OneClassOnly, "no cell type has known markers to evaluate");
    }
    double total = 0.0;
    for (const auto& [type, v] : out.per_type) total += v;
    out.auroc = total / static_cast<double>(out.per_type.size());
    return out;
}

std::vector<MarkerCandidate> novel_marker_discovery(const std::vector<std::vector<GeneImpact>>& cell_scores,
                                                    const std::vector<std::string>& types, const MarkerSets& known_markers,
                                                    const tokenizer::GeneVocab& vocab) {
    std::set<std::string> known;
    for (const auto& [type, genes] : known_markers) {
        known.insert(genes.begin(), genes.end());
    }
    struct Tally {
        std::size_t frequency = 0;
        double total = 0.0;
    };
    std::map<std::string, std::vector<std::pair<tokenizer::TokenId, Tally>>> per_type;
    for (const auto& [type, members] : cells_by_type(cell_scores, types)) {
        std::map<tokenizer::TokenId, Tally> tally;
        for (std::size_t c : members) {
            std::vector<GeneImpact> eligible;
            for (const auto& g : cell_scores[c]) {
                if (!known.count(vocab.gene(g.gene))) eligible.push_back(g);
            }
            std::sort(eligible.begin(), eligible.end(), [](const GeneImpact& a, const GeneImpact& b) {
                return a.impact != b.impact ? a.impact > b.impact : a.gene < b.gene;
            });
            const auto top = static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(eligible.size())));
            for (std::size_t i = 0; i < top; ++i) {
                auto& t = tally[eligible[i].gene];
                ++t.frequency;
                t.total += eligible[i].impact;
            }
        }
        std::vector<std::pair<tokenizer::TokenId, Tally>> ranked(tally.begin(), tally.end());
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            if (a.second.frequency != b.second.frequency) return a.second.frequency > b.second.frequency;
            if (a.second.total != b.second.total) return a.second.total > b.second.total;
            return a.first < b.first;
        });
        if (ranked.size() > 10) ranked.resize(10);
        per_type[type] = std::move(ranked);
    }
    std::map<tokenizer::TokenId, std::size_t> type_count;
    for (const auto& [type, ranked] : per_type) {
        for (const auto& [gene, t] : ranked) ++type_count[gene];
    }
    std::vector<MarkerCandidate> out;
    for (const auto& [type, ranked] : per_type) {
        for (const auto& [gene, t] : ranked) {
            if (type_count[gene] == 1) {
                out.push_back({type, vocab.gene(gene), t.frequency, t.total / static_cast<double>(t.frequency)});
            }
        }
    }
    return out;
}

namespace {

ad::Var classifier_logits(ad::Tape& tape, model::ModelState& encoder, ad::Parameter& w, ad::Parameter& b,
                          std::span<const tokenizer::TokenSequence> seqs, std::mt19937_64* rng) {
    const auto fw = model::forward(tape, encoder, model::pack(seqs), rng);
    return ad::linear(tape, fw.embeddings, tape.param(w), tape.param(b));
}

} // namespace

std::vector<std::size_t> Classifier::predict(std::span<const tokenizer::TokenSequence> seqs) const {
    std::vector<std::size_t> out;
    out.reserve(seqs.size());
    // A non-recording tape never writes gradients, so nothing is mutated.
    auto& self = const_cast<Classifier&>(*this);
    constexpr std::size_t chunk = 32;
    for (std::size_t start = 0; start < seqs.size(); start += chunk) {
        const auto n = std::min(chunk, seqs.size() - start);
        ad::Tape tape(false);
        const auto logits = classifier_logits(tape, self.encoder, self.head_weight, self.head_bias, seqs.subspan(start, n), nullptr);
        const auto& m = tape.value(logits);
        for (std::size_t r = 0; r < n; ++r) {
            const auto row = m.row(r);
            out.push_back(static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()));
        }
    }
    return out;
}

FinetuneResult finetune_classifier(const model::ModelState& pretrained, std::span<const tokenizer::TokenSequence> train_seqs,
                                   const std::vector<std::string>& train_labels,
                                   std::span<const tokenizer::TokenSequence> val_seqs, const std::vector<std::string>& val_labels,
                                   const FinetuneOptions& options) {
    if (train_seqs.size() != train_labels.size() || val_seqs.size() != val_labels.size()) {
        throw Error(ErrorKind::LengthMismatch, "one label per sequence required");
    }
    if (train_seqs.empty() || val_seqs.empty()) {
        throw Error(ErrorKind::DegenerateInput, "fine-tuning needs training and validation cells");
    }
    const auto train_codes = encode_labels(train_labels);
    std::vector<std::size_t> val_codes;
    for (const auto& l : val_labels) {
        const auto it = std::lower_bound(train_codes.names.begin(), train_codes.names.end(), l);
        if (it == train_codes.names.end() || *it != l) {
            throw Error(ErrorKind::UnseenValLabel, l);
        }
        val_codes.push_back(static_cast<std::size_t>(it - train_codes.names.begin()));
    }

    const std::size_t d = pretrained.config().embed_dim;
    const std::size_t n_classes = train_codes.names.size();
    Classifier clf{pretrained, ad::Parameter("head.weight", n_classes, d), ad::Parameter("head.bias", 1, n_classes, false),
                   train_codes.names};
    {
        std::mt19937_64 rng(trainer::mix_seed(options.seed, 0x6865616400ULL));
        const double bound = 1.0 / std::sqrt(static_cast<double>(d));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (double& v : clf.head_weight.value.data) {
            v = static_cast<double>(static_cast<float>(dist(rng)));
        }
    }

    auto evaluate = [&](const Classifier& c, FinetuneResult& r) {
        const auto preds = c.predict(val_seqs);
        r.val_accuracy = metrics::accuracy(preds, val_codes);
        r.val_macro_f1 = metrics::macro_f1(preds, val_codes);
    };
    FinetuneResult best{clf, 0.0, 0.0, 0};
    evaluate(clf, best);

    const std::size_t n = train_seqs.size();
    const std::size_t batch = std::max<std::size_t>(1, std::min(options.batch_size, n));
    const std::size_t steps_per_epoch = (n + batch - 1) / batch;
    trainer::TrainConfig tc;
    tc.lr = options.lr;
    tc.weight_decay = options.weight_decay;
    tc.total_steps = options.epochs * steps_per_epoch;
    tc.warmup_steps = std::min(options.warmup_steps, tc.total_steps);
    tc.batch_size = batch;
    tc.seed = options.seed;

    std::vector<ad::Parameter*> params;
    for (auto& p : clf.encoder.parameters()) params.push_back(&p);
    params.push_back(&clf.head_weight);
    params.push_back(&clf.head_bias);
    trainer::AdamW optimizer(params);

    std::vector<std::size_t> order(n);
    std::size_t step = 0;
    for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::mt19937_64 shuffle_rng(trainer::mix_seed(options.seed, epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (std::size_t start = 0; start < n; start += batch) {
            ++step;
            const std::size_t m = std::min(batch, n - start);
            std::vector<tokenizer::TokenSequence> seqs;
            std::vector<std::size_t> labels;
            for (std::size_t i = start; i < start + m; ++i) {
                seqs.push_back(train_seqs[order[i]]);
                labels.push_back(train_codes.codes[order[i]]);
            }
            for (auto* p : params) p->zero_grad();
            std::mt19937_64 dropout_rng(trainer::mix_seed(options.seed ^ 0x5eedf17eULL, step));
            ad::Tape tape;
            const auto logits = classifier_logits(tape, clf.encoder, clf.head_weight, clf.head_bias, seqs, &dropout_rng);
            const auto loss = ad::cross_entropy(tape, logits, labels);
            if (!std::isfinite(tape.value(loss)(0, 0))) {
                throw Error(ErrorKind::NonFiniteLoss, "fine-tuning loss at step " + std::to_string(step));
            }
            tape.backward(loss);
            for (const auto* p : params) {
                for (double g : p->grad.data) {
                    if (!std::isfinite(g)) throw Error(ErrorKind::NonFiniteGradient, "parameter " + p->name);
                }
            }
            optimizer.step(tc, trainer::lr_at(tc, step));
        }
        FinetuneResult current{clf, 0.0, 0.0, epoch};
        evaluate(clf, current);
        if (current.val_macro_f1 > best.val_macro_f1) {
            best = std::move(current);
        }
    }
    return best;
}

std::string format_predictions(const std::vector<std::string>& cell_ids, const std::vector<NovelPrediction>& preds) {
    if (cell_ids.size() != preds.size()) {
        throw Error(ErrorKind::SizeMismatch, "one cell id per prediction required");
    }
    std::string out;
    char buf[64];
    for (std::size_t i = 0; i < preds.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.6f", preds[i].score);
        out += cell_ids[i] + '\t' + preds[i].type + '\t' + buf + '\n';
    }
    return out;
}

std::string format_candidates(const std::vector<MarkerCandidate>& candidates) {
    std::string out;
    char buf[64];
    for (const auto& c : candidates) {
        std::snprintf(buf, sizeof(buf), "%.6f", c.mean_impact);
        out += c.type + '\t' + c.gene + '\t' + std::to_string(c.frequency) + '\t' + buf + '\n';
    }
    return out;
}

} // namespace cellokit::tasks
