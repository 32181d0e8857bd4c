#include "cellokit/synthetic.hpp"
#include "cellokit/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

namespace cellokit::synthetic {

namespace {

std::string type_id(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "CL:%07zu", 9000000 + i);
    return buf;
}

std::string gene_id(std::size_t g) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "G%04zu", g);
    return buf;
}

} // namespace

std::string SyntheticWorld::ontology_text() const {
    std::string out;
    for (std::size_t i = 1; i < types.size(); ++i) {
        out += types[i] + '\t' + types[parent[i]] + '\n';
    }
    return out;
}

std::string SyntheticWorld::markers_text() const {
    std::string out;
    for (std::size_t t = 0; t < types.size(); ++t) {
        for (auto g : signatures[t]) {
            out += types[t] + '\t' + vocab.gene(g) + '\n';
        }
    }
    return out;
}

SyntheticWorld gen_synthetic(const SyntheticOptions& o) {
    if (o.n_types == 0 || o.tree_branching == 0 || o.n_genes == 0 || o.cells_per_type == 0 || o.n_batches == 0) {
        throw Error(ErrorKind::InvalidArgument, "synthetic sizes must be positive");
    }
    if (o.signature_size > o.n_genes || !(o.signal_strength >= 0.0) || !(o.batch_effect_strength >= 0.0) ||
        !(o.library_size > 0.0) || !(o.dispersion > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "synthetic parameters out of range");
    }
    std::mt19937_64 rng(o.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    SyntheticWorld w;
    std::vector<std::string> genes;
    for (std::size_t g = 0; g < o.n_genes; ++g) genes.push_back(gene_id(g));
    w.vocab = tokenizer::GeneVocab(genes);

    w.types.resize(o.n_types);
    w.parent.resize(o.n_types);
    w.log_means.resize(o.n_types);
    w.signatures.resize(o.n_types);
    for (std::size_t t = 0; t < o.n_types; ++t) {
        w.types[t] = type_id(t);
        w.parent[t] = t == 0 ? 0 : (t - 1) / o.tree_branching;
    }

    w.log_means[0].resize(o.n_genes);
    for (double& m : w.log_means[0]) m = normal(rng);
    std::vector<tokenizer::TokenId> all_genes(o.n_genes);
    std::iota(all_genes.begin(), all_genes.end(), tokenizer::TokenId{0});
    for (std::size_t t = 1; t < o.n_types; ++t) {
        w.log_means[t] = w.log_means[w.parent[t]];
        std::vector<tokenizer::TokenId> pick = all_genes;
        std::shuffle(pick.begin(), pick.end(), rng);
        pick.resize(o.signature_size);
        std::sort(pick.begin(), pick.end());
        for (auto g : pick) {
            w.log_means[t][g] += o.signal_strength * (1.0 + unit(rng));
        }
        w.signatures[t] = std::move(pick);
    }

    std::vector<std::vector<double>> batch_log_factor(o.n_batches, std::vector<double>(o.n_genes));
    for (auto& row : batch_log_factor) {
        for (double& f : row) f = o.batch_effect_strength * normal(rng);
    }

    std::size_t cell_no = 0;
    std::vector<double> rate(o.n_genes);
    for (std::size_t t = 0; t < o.n_types; ++t) {
        for (std::size_t c = 0; c < o.cells_per_type; ++c) {
            const std::size_t b = c % o.n_batches;
            double z = 0.0;
            for (std::size_t g = 0; g < o.n_genes; ++g) {
                rate[g] = std::exp(w.log_means[t][g] + batch_log_factor[b][g]);
                z += rate[g];
            }
            const double library = o.library_size * std::exp(0.3 * normal(rng));
            tokenizer::ExpressionProfile p;
            char buf[32];
            std::snprintf(buf, sizeof(buf), "cell%05zu", cell_no++);
            p.cell_id = buf;
            p.cell_type = w.types[t];
            p.batch = "batch" + std::to_string(b);
            p.donor = "donor" + std::to_string(b);
            p.tissue = "synthetic";
            for (std::size_t g = 0; g < o.n_genes; ++g) {
                const double mean = library * rate[g] / z;
                std::gamma_distribution<double> gamma(o.dispersion, mean / o.dispersion);
                const double lambda = gamma(rng);
                std::poisson_distribution<std::uint64_t> poisson(lambda);
                const std::uint64_t count = lambda > 0.0 ? poisson(rng) : 0;
                if (count > 0) {
                    p.counts.emplace_back(static_cast<tokenizer::TokenId>(g), count);
                }
            }
            w.cells.push_back(std::move(p));
        }
    }
    return w;
}

} // namespace cellokit::synthetic
