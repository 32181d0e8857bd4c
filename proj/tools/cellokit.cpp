// Command-line front end: data generation, pre-training and the downstream evaluations.

#include "cellokit/clustering.hpp"
#include "cellokit/config.hpp"
#include "cellokit/error.hpp"
#include "cellokit/io.hpp"
#include "cellokit/metrics.hpp"
#include "cellokit/ontology.hpp"
#include "cellokit/pipeline.hpp"
#include "cellokit/synthetic.hpp"
#include "cellokit/tasks.hpp"
#include "cellokit/trainer.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <iostream>
#include <map>
#include <optional>
#include <set>

namespace fs = std::filesystem;
using namespace cellokit;

namespace {

std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

io::Manifest start_manifest(const std::string& command) {
    io::Manifest m;
    m.set("command", command);
    m.set("tool_version", std::string(io::tool_version));
    m.set("started_utc", utc_now());
    return m;
}

void finish_manifest(io::Manifest& m, const fs::path& dir) {
    m.set("finished_utc", utc_now());
    io::write_atomic(dir / "manifest.tsv", m.to_text());
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto comma = s.find(',', start);
        const auto end = comma == std::string::npos ? s.size() : comma;
        if (end > start) out.push_back(s.substr(start, end - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

// Assets written by `pretrain` and read by every model-based command.
struct ModelDir {
    model::ModelState state;
    tokenizer::GeneVocab vocab;
    tokenizer::NormalizationFactors factors;

    tasks::Encoding encoding() const { return {&vocab, &factors, state.config().max_len}; }
};

ModelDir load_model_dir(const fs::path& dir, io::Manifest& m) {
    ModelDir out;
    out.vocab = tokenizer::GeneVocab::parse(io::read_file(dir / "vocab.txt"));
    out.factors = tokenizer::NormalizationFactors::parse_tsv(io::read_file(dir / "factors.tsv"), out.vocab);
    out.state = trainer::load_checkpoint(dir / "model.ckpt");
    if (out.state.config().vocab_size != out.vocab.size()) {
        throw Error(ErrorKind::VersionMismatch, "checkpoint vocab size " + std::to_string(out.state.config().vocab_size) +
                                                    " differs from vocab.txt size " + std::to_string(out.vocab.size()));
    }
    m.add_input("model", dir / "model.ckpt");
    m.add_input("vocab", dir / "vocab.txt");
    m.add_input("factors", dir / "factors.tsv");
    return out;
}

io::Corpus load_corpus(const fs::path& expression, const fs::path& metadata, const tokenizer::GeneVocab& vocab, io::Manifest& m,
                       const std::string& label = "") {
    auto corpus = io::read_corpus(expression, metadata, vocab);
    m.add_input(label + "expression", expression);
    m.add_input(label + "metadata", metadata);
    for (const auto& w : corpus.warnings) {
        std::cerr << "warning: " << w << '\n';
    }
    m.set(label + "n_cells", std::to_string(corpus.profiles.size()));
    m.set(label + "unknown_gene_entries", std::to_string(corpus.unknown_gene_entries));
    return corpus;
}

std::vector<std::string> field_of(const std::vector<tokenizer::ExpressionProfile>& cells, std::string tokenizer::ExpressionProfile::*f) {
    std::vector<std::string> out;
    for (const auto& c : cells) out.push_back(c.*f);
    return out;
}

// Embeddings joined with metadata rows by cell id, in embedding-file order.
struct LabeledEmbeddings {
    std::vector<std::string> ids;
    ad::Matrix points;
    std::vector<io::CellMetadata> meta;
};

LabeledEmbeddings load_labeled_embeddings(const fs::path& embeddings, const fs::path& metadata, io::Manifest& m) {
    LabeledEmbeddings out;
    std::tie(out.ids, out.points) = io::parse_embeddings(io::read_file(embeddings));
    const auto rows = io::parse_metadata(io::read_file(metadata));
    std::map<std::string, const io::CellMetadata*> by_id;
    for (const auto& r : rows) by_id[r.cell_id] = &r;
    for (const auto& id : out.ids) {
        const auto it = by_id.find(id);
        if (it == by_id.end()) throw Error(ErrorKind::MissingMetadata, id);
        out.meta.push_back(*it->second);
    }
    m.add_input("embeddings", embeddings);
    m.add_input("metadata", metadata);
    return out;
}

void write_report(const metrics::MetricReport& report, const fs::path& dir) {
    io::write_atomic(dir / "metrics.tsv", report.to_tsv());
    io::write_atomic(dir / "metrics.json", report.to_json() + "\n");
}

std::vector<std::vector<tasks::GeneImpact>> score_cells(const ModelDir& md, const std::vector<tokenizer::ExpressionProfile>& cells,
                                                        tasks::Impact impact) {
    std::vector<std::vector<tasks::GeneImpact>> out;
    out.reserve(cells.size());
    for (const auto& c : cells) {
        out.push_back(tasks::knockout_scores(md.state, c, md.encoding(), impact));
    }
    return out;
}

tasks::Impact parse_impact(const std::string& s) {
    if (s == "cosine") return tasks::Impact::Cosine;
    if (s == "l2") return tasks::Impact::L2;
    throw CLI::ValidationError("--impact", "expected cosine or l2");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"cellokit: ontology-guided transcriptome pre-training at desk scale"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(io::tool_version));

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Write a synthetic ontology, corpus, vocabulary and marker list");
    synthetic::SyntheticOptions gen_opts;
    fs::path gen_out;
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--seed", gen_opts.seed);
    gen->add_option("--n-types", gen_opts.n_types);
    gen->add_option("--branching", gen_opts.tree_branching);
    gen->add_option("--n-genes", gen_opts.n_genes);
    gen->add_option("--cells-per-type", gen_opts.cells_per_type);
    gen->add_option("--signal", gen_opts.signal_strength);
    gen->add_option("--batch-effect", gen_opts.batch_effect_strength);
    gen->add_option("--n-batches", gen_opts.n_batches);
    gen->add_option("--signature-size", gen_opts.signature_size);

    // pretrain
    auto* pre = app.add_subcommand("pretrain", "Pre-train a model on a labeled corpus");
    fs::path pre_config, pre_ontology, pre_expr, pre_meta, pre_vocab, pre_out;
    pre->add_option("--config", pre_config, "Config file of 'key = value' lines")->check(CLI::ExistingFile);
    pre->add_option("--ontology", pre_ontology)->required()->check(CLI::ExistingFile);
    pre->add_option("--expression", pre_expr)->required()->check(CLI::ExistingFile);
    pre->add_option("--metadata", pre_meta)->required()->check(CLI::ExistingFile);
    pre->add_option("--vocab", pre_vocab)->required()->check(CLI::ExistingFile);
    pre->add_option("--out", pre_out, "Output directory")->required();
    std::map<std::string, std::string> flag_values;
    for (const auto& key : config::known_keys()) {
        std::string flag = "--" + key;
        std::replace(flag.begin(), flag.end(), '_', '-');
        pre->add_option(flag, flag_values[key], "Overrides config key " + key);
    }
    std::string steps_alias;
    pre->add_option("--steps", steps_alias, "Alias of --total-steps");

    // embed
    auto* emb = app.add_subcommand("embed", "Export cell embeddings");
    fs::path emb_model, emb_expr, emb_meta, emb_out;
    std::size_t emb_batch = 32;
    emb->add_option("--model", emb_model, "Directory written by pretrain")->required()->check(CLI::ExistingDirectory);
    emb->add_option("--expression", emb_expr)->required()->check(CLI::ExistingFile);
    emb->add_option("--metadata", emb_meta)->required()->check(CLI::ExistingFile);
    emb->add_option("--batch-size", emb_batch);
    emb->add_option("--out", emb_out)->required();

    // cluster-eval / batch-eval
    fs::path ce_emb, ce_meta, ce_out;
    std::size_t ce_k = 15;
    auto* ce = app.add_subcommand("cluster-eval", "Zero-shot clustering metrics of exported embeddings");
    ce->add_option("--embeddings", ce_emb)->required()->check(CLI::ExistingFile);
    ce->add_option("--metadata", ce_meta)->required()->check(CLI::ExistingFile);
    ce->add_option("--k", ce_k);
    ce->add_option("--out", ce_out)->required();
    auto* be = app.add_subcommand("batch-eval", "Batch-integration metrics of exported embeddings");
    be->add_option("--embeddings", ce_emb)->required()->check(CLI::ExistingFile);
    be->add_option("--metadata", ce_meta)->required()->check(CLI::ExistingFile);
    be->add_option("--k", ce_k);
    be->add_option("--out", ce_out)->required();

    // novel-celltype
    auto* nc = app.add_subcommand("novel-celltype", "Classify cells of types unseen in a query set");
    fs::path nc_model, nc_ontology, nc_expr, nc_meta, nc_out;
    std::string nc_unknown, nc_alignment = "spearman";
    double nc_fraction = 1.0, nc_damping = 0.9;
    std::uint64_t nc_seed = 0;
    nc->add_option("--model", nc_model)->required()->check(CLI::ExistingDirectory);
    nc->add_option("--ontology", nc_ontology)->required()->check(CLI::ExistingFile);
    nc->add_option("--expression", nc_expr)->required()->check(CLI::ExistingFile);
    nc->add_option("--metadata", nc_meta)->required()->check(CLI::ExistingFile);
    nc->add_option("--unknown", nc_unknown, "Comma-separated unknown type ids")->required();
    nc->add_option("--profile-fraction", nc_fraction);
    nc->add_option("--alignment", nc_alignment)->check(CLI::IsMember({"spearman", "cosine"}));
    nc->add_option("--damping", nc_damping);
    nc->add_option("--seed", nc_seed);
    nc->add_option("--out", nc_out)->required();

    // marker-genes / novel-markers
    fs::path mk_model, mk_expr, mk_meta, mk_markers, mk_out;
    std::string mk_impact = "cosine";
    auto* mg = app.add_subcommand("marker-genes", "Knockout-based marker gene AUROC");
    auto* nm = app.add_subcommand("novel-markers", "Candidate novel marker genes per type");
    for (auto* sc : {mg, nm}) {
        sc->add_option("--model", mk_model)->required()->check(CLI::ExistingDirectory);
        sc->add_option("--expression", mk_expr)->required()->check(CLI::ExistingFile);
        sc->add_option("--metadata", mk_meta)->required()->check(CLI::ExistingFile);
        sc->add_option("--markers", mk_markers, "type<TAB>gene lines")->required()->check(CLI::ExistingFile);
        sc->add_option("--impact", mk_impact)->check(CLI::IsMember({"cosine", "l2"}));
        sc->add_option("--out", mk_out)->required();
    }

    // finetune
    auto* ft = app.add_subcommand("finetune", "Fine-tune a linear cell-type classifier");
    fs::path ft_model, ft_expr, ft_meta, ft_val_expr, ft_val_meta, ft_test_expr, ft_test_meta, ft_out;
    tasks::FinetuneOptions ft_opts;
    ft->add_option("--model", ft_model)->required()->check(CLI::ExistingDirectory);
    ft->add_option("--expression", ft_expr)->required()->check(CLI::ExistingFile);
    ft->add_option("--metadata", ft_meta)->required()->check(CLI::ExistingFile);
    ft->add_option("--val-expression", ft_val_expr)->required()->check(CLI::ExistingFile);
    ft->add_option("--val-metadata", ft_val_meta)->required()->check(CLI::ExistingFile);
    auto* test_expr_opt = ft->add_option("--test-expression", ft_test_expr)->check(CLI::ExistingFile);
    ft->add_option("--test-metadata", ft_test_meta)->check(CLI::ExistingFile)->needs(test_expr_opt);
    ft->add_option("--epochs", ft_opts.epochs);
    ft->add_option("--batch-size", ft_opts.batch_size);
    ft->add_option("--lr", ft_opts.lr);
    ft->add_option("--weight-decay", ft_opts.weight_decay);
    ft->add_option("--warmup-steps", ft_opts.warmup_steps);
    ft->add_option("--seed", ft_opts.seed);
    ft->add_option("--out", ft_out)->required();

    // ppr-table
    auto* pt = app.add_subcommand("ppr-table", "PPR similarity levels between ontology nodes");
    fs::path pt_ontology, pt_out;
    double pt_damping = 0.9, pt_threshold = ontology::default_similarity_threshold;
    std::string pt_nodes;
    pt->add_option("--ontology", pt_ontology)->required()->check(CLI::ExistingFile);
    pt->add_option("--damping", pt_damping);
    pt->add_option("--threshold", pt_threshold);
    pt->add_option("--nodes", pt_nodes, "Comma-separated subset (default: all nodes)");
    pt->add_option("--out", pt_out, "Output file (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) {
            auto m = start_manifest("gen-data");
            const auto world = synthetic::gen_synthetic(gen_opts);
            m.set("seed", std::to_string(gen_opts.seed));
            io::write_atomic(gen_out / "ontology.tsv", world.ontology_text());
            io::write_atomic(gen_out / "vocab.txt", world.vocab.to_text());
            io::write_atomic(gen_out / "expression.tsv", io::format_expression(world.cells, world.vocab));
            io::write_atomic(gen_out / "metadata.tsv", io::format_metadata(io::metadata_of(world.cells)));
            io::write_atomic(gen_out / "markers.tsv", world.markers_text());
            finish_manifest(m, gen_out);
        } else if (pre->parsed()) {
            auto m = start_manifest("pretrain");
            config::RunConfig cfg;
            if (!pre_config.empty()) {
                for (const auto& [k, v] : config::parse_pairs(io::read_file(pre_config))) {
                    config::set_value(cfg, k, v);
                }
                m.add_input("config", pre_config);
            }
            if (!steps_alias.empty()) {
                flag_values["total_steps"] = steps_alias;
            }
            for (const auto& [k, v] : flag_values) {
                if (!v.empty()) {
                    config::set_value(cfg, k, v);
                    m.set("override." + k, v);
                }
            }
            const auto graph = ontology::OntologyGraph::parse(io::read_file(pre_ontology));
            const auto vocab = tokenizer::GeneVocab::parse(io::read_file(pre_vocab));
            m.add_input("ontology", pre_ontology);
            m.add_input("vocab", pre_vocab);
            const auto corpus = load_corpus(pre_expr, pre_meta, vocab, m);
            for (const auto& key : config::known_keys()) {
                m.set("config." + key, config::get_value(cfg, key));
            }
            m.set("seed", std::to_string(cfg.train.seed));

            fs::create_directories(pre_out);
            std::string log = trainer::log_header();
            const auto run = pipeline::pretrain_corpus(graph, vocab, corpus.profiles, cfg,
                                                       [&](const trainer::LogRow& row, const model::ModelState& state) {
                                                           log += trainer::format_log_row(row);
                                                           if (cfg.train.checkpoint_interval > 0 &&
                                                               row.step % cfg.train.checkpoint_interval == 0 &&
                                                               row.step != cfg.train.total_steps) {
                                                               trainer::save_checkpoint(
                                                                   state, pre_out / ("model-step" + std::to_string(row.step) + ".ckpt"));
                                                           }
                                                       });
            trainer::save_checkpoint(run.state, pre_out / "model.ckpt");
            io::write_atomic(pre_out / "factors.tsv", run.factors.to_tsv(vocab));
            io::write_atomic(pre_out / "vocab.txt", vocab.to_text());
            io::write_atomic(pre_out / "loss.tsv", log);
            io::write_atomic(pre_out / "config.cfg", config::snapshot(cfg));
            m.set("encode.unknown_genes", std::to_string(run.encode_stats.unknown_genes));
            m.set("encode.empty_profiles", std::to_string(run.encode_stats.empty_profiles));
            finish_manifest(m, pre_out);
        } else if (emb->parsed()) {
            auto m = start_manifest("embed");
            const auto md = load_model_dir(emb_model, m);
            const auto corpus = load_corpus(emb_expr, emb_meta, md.vocab, m);
            const auto z = tasks::embed_corpus(md.state, corpus.profiles, md.encoding(), emb_batch);
            io::write_atomic(emb_out / "embeddings.tsv", io::format_embeddings(field_of(corpus.profiles, &tokenizer::ExpressionProfile::cell_id), z));
            finish_manifest(m, emb_out);
        } else if (ce->parsed() || be->parsed()) {
            const bool batch = be->parsed();
            auto m = start_manifest(batch ? "batch-eval" : "cluster-eval");
            const auto data = load_labeled_embeddings(ce_emb, ce_meta, m);
            std::vector<std::string> types, batches;
            for (const auto& r : data.meta) {
                types.push_back(r.cell_type);
                batches.push_back(r.batch);
            }
            auto report = batch ? tasks::batch_integration_eval(data.points, types, batches, ce_k)
                                : tasks::zero_shot_eval(data.points, types, ce_k);
            report.set_provenance("embeddings", ce_emb.string());
            write_report(report, ce_out);
            if (!batch) {
                const auto codes = tasks::encode_labels(types);
                const auto best = clustering::sweep(data.points, codes.codes, ce_k);
                io::write_atomic(ce_out / "partition.tsv", clustering::format_partition(data.ids, best.best));
            }
            m.set("k", std::to_string(ce_k));
            finish_manifest(m, ce_out);
        } else if (nc->parsed()) {
            auto m = start_manifest("novel-celltype");
            const auto md = load_model_dir(nc_model, m);
            const auto graph = ontology::OntologyGraph::parse(io::read_file(nc_ontology));
            m.add_input("ontology", nc_ontology);
            const auto corpus = load_corpus(nc_expr, nc_meta, md.vocab, m);
            const auto unknown_list = split_list(nc_unknown);
            const std::set<std::string> unknown(unknown_list.begin(), unknown_list.end());
            std::vector<tokenizer::ExpressionProfile> known_cells, query_cells;
            for (const auto& c : corpus.profiles) {
                (unknown.count(c.cell_type) ? query_cells : known_cells).push_back(c);
            }
            const auto known_types = field_of(known_cells, &tokenizer::ExpressionProfile::cell_type);
            const auto profiles = tasks::build_type_profiles(tasks::embed_corpus(md.state, known_cells, md.encoding()), known_types,
                                                             nc_fraction, nc_seed);
            ontology::PprOptions ppr;
            ppr.damping = nc_damping;
            const auto task = tasks::make_novel_task(graph, profiles.types, unknown_list, ppr);
            const auto preds = tasks::novel_celltype_classify(tasks::embed_corpus(md.state, query_cells, md.encoding()), profiles, task,
                                                              nc_alignment == "cosine" ? tasks::Alignment::Cosine
                                                                                       : tasks::Alignment::Spearman);
            io::write_atomic(nc_out / "predictions.tsv",
                             tasks::format_predictions(field_of(query_cells, &tokenizer::ExpressionProfile::cell_id), preds));
            if (!preds.empty()) {
                std::vector<std::string> pred_types;
                for (const auto& p : preds) pred_types.push_back(p.type);
                std::vector<std::string> truth = field_of(query_cells, &tokenizer::ExpressionProfile::cell_type);
                std::vector<std::string> joint = truth;
                joint.insert(joint.end(), pred_types.begin(), pred_types.end());
                const auto codes = tasks::encode_labels(joint);
                const std::span<const std::size_t> all(codes.codes);
                metrics::MetricReport report;
                report.set("Acc", metrics::accuracy(all.subspan(truth.size()), all.first(truth.size())));
                report.set("MacroF1", metrics::macro_f1(all.subspan(truth.size()), all.first(truth.size())));
                report.set_provenance("alignment", nc_alignment);
                write_report(report, nc_out);
            }
            finish_manifest(m, nc_out);
        } else if (mg->parsed() || nm->parsed()) {
            auto m = start_manifest(mg->parsed() ? "marker-genes" : "novel-markers");
            const auto md = load_model_dir(mk_model, m);
            const auto corpus = load_corpus(mk_expr, mk_meta, md.vocab, m);
            const auto markers = tasks::parse_markers(io::read_file(mk_markers));
            m.add_input("markers", mk_markers);
            const auto scores = score_cells(md, corpus.profiles, parse_impact(mk_impact));
            const auto types = field_of(corpus.profiles, &tokenizer::ExpressionProfile::cell_type);
            if (mg->parsed()) {
                const auto eval = tasks::marker_eval(scores, types, markers, md.vocab);
                metrics::MetricReport report;
                report.set("AUROC", eval.auroc);
                for (const auto& [type, v] : eval.per_type) report.set("AUROC." + type, v);
                report.set_provenance("impact", mk_impact);
                write_report(report, mk_out);
            } else {
                io::write_atomic(mk_out / "candidates.tsv",
                                 tasks::format_candidates(tasks::novel_marker_discovery(scores, types, markers, md.vocab)));
            }
            finish_manifest(m, mk_out);
        } else if (ft->parsed()) {
            auto m = start_manifest("finetune");
            const auto md = load_model_dir(ft_model, m);
            const auto train = load_corpus(ft_expr, ft_meta, md.vocab, m, "train.");
            const auto val = load_corpus(ft_val_expr, ft_val_meta, md.vocab, m, "val.");
            const auto enc = md.encoding();
            const auto result = tasks::finetune_classifier(
                md.state, tasks::encode_corpus(train.profiles, enc), field_of(train.profiles, &tokenizer::ExpressionProfile::cell_type),
                tasks::encode_corpus(val.profiles, enc), field_of(val.profiles, &tokenizer::ExpressionProfile::cell_type), ft_opts);
            metrics::MetricReport report;
            report.set("val.Acc", result.val_accuracy);
            report.set("val.MacroF1", result.val_macro_f1);
            report.set_provenance("best_epoch", std::to_string(result.best_epoch));
            if (!ft_test_expr.empty()) {
                const auto test = load_corpus(ft_test_expr, ft_test_meta, md.vocab, m, "test.");
                const auto preds = result.classifier.predict(tasks::encode_corpus(test.profiles, enc));
                std::vector<std::size_t> truth;
                for (const auto& c : test.profiles) {
                    const auto& names = result.classifier.classes;
                    const auto it = std::lower_bound(names.begin(), names.end(), c.cell_type);
                    // Types unseen in training can never be predicted; they count as misses.
                    truth.push_back(it != names.end() && *it == c.cell_type ? static_cast<std::size_t>(it - names.begin())
                                                                            : names.size());
                }
                report.set("test.Acc", metrics::accuracy(preds, truth));
                report.set("test.MacroF1", metrics::macro_f1(preds, truth));
            }
            write_report(report, ft_out);
            trainer::save_checkpoint(result.classifier.encoder, ft_out / "encoder.ckpt");
            std::string head = "class\tbias\tweights\n";
            for (std::size_t c = 0; c < result.classifier.classes.size(); ++c) {
                head += result.classifier.classes[c] + '\t' + std::to_string(result.classifier.head_bias.value(0, c));
                for (double v : result.classifier.head_weight.value.row(c)) head += '\t' + std::to_string(v);
                head += '\n';
            }
            io::write_atomic(ft_out / "head.tsv", head);
            finish_manifest(m, ft_out);
        } else if (pt->parsed()) {
            const auto graph = ontology::OntologyGraph::parse(io::read_file(pt_ontology));
            std::vector<std::size_t> subset;
            if (pt_nodes.empty()) {
                for (std::size_t i = 0; i < graph.size(); ++i) subset.push_back(i);
            } else {
                for (const auto& id : split_list(pt_nodes)) subset.push_back(graph.index(id));
            }
            ontology::PprOptions ppr;
            ppr.damping = pt_damping;
            const auto table = ontology::build_similarity_table(graph, subset, ppr, pt_threshold);
            const std::string text = table.to_tsv(graph);
            if (pt_out.empty()) {
                std::cout << text;
            } else {
                io::write_atomic(pt_out, text);
                auto m = start_manifest("ppr-table");
                m.add_input("ontology", pt_ontology);
                m.set("damping", std::to_string(pt_damping));
                m.set("threshold", std::to_string(pt_threshold));
                io::write_atomic(fs::path(pt_out.string() + ".manifest.tsv"), m.to_text());
            }
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.kind() == ErrorKind::InvalidArgument ? 1 : 2;
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
