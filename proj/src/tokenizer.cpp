#include "cellokit/tokenizer.hpp"
#include "cellokit/error.hpp"

#include <algorithm>
#include <cstdio>
#include <random>
#include <sstream>

namespace cellokit::tokenizer {

GeneVocab::GeneVocab(std::vector<std::string> genes) : genes_(std::move(genes)) {
    for (std::size_t i = 0; i < genes_.size(); ++i) {
        if (genes_[i].empty()) {
            throw Error(ErrorKind::InvalidArgument, "empty gene id at vocab line " + std::to_string(i + 1));
        }
        if (!lookup_.emplace(genes_[i], static_cast<TokenId>(i)).second) {
            throw Error(ErrorKind::InvalidArgument, "duplicate gene id " + genes_[i]);
        }
    }
}

GeneVocab GeneVocab::parse(std::string_view text) {
    std::vector<std::string> genes;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        genes.push_back(line);
    }
    return GeneVocab(std::move(genes));
}

std::string GeneVocab::to_text() const {
    std::string out;
    for (const auto& g : genes_) {
        out += g;
        out += '\n';
    }
    return out;
}

std::optional<TokenId> GeneVocab::find(std::string_view gene) const {
    auto it = lookup_.find(std::string(gene));
    if (it == lookup_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::optional<double> NormalizationFactors::find(TokenId g) const {
    if (!contains(g)) {
        return std::nullopt;
    }
    return factors_[g];
}

std::string NormalizationFactors::to_tsv(const GeneVocab& vocab) const {
    std::string out;
    char buf[64];
    for (std::size_t g = 0; g < factors_.size(); ++g) {
        if (factors_[g] > 0.0) {
            std::snprintf(buf, sizeof(buf), "%.17g", factors_[g]);
            out += vocab.gene(static_cast<TokenId>(g)) + '\t' + buf + '\n';
        }
    }
    return out;
}

NormalizationFactors NormalizationFactors::parse_tsv(std::string_view text, const GeneVocab& vocab) {
    std::vector<double> f(vocab.n_genes(), 0.0);
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw Error(ErrorKind::MalformedLine, "factors line " + std::to_string(line_no));
        }
        const auto id = vocab.find(std::string_view(line).substr(0, tab));
        if (!id) {
            throw Error(ErrorKind::MalformedLine, "factors line " + std::to_string(line_no) + ": unknown gene");
        }
        const double v = std::stod(line.substr(tab + 1));
        if (!(v > 0.0)) {
            throw Error(ErrorKind::MalformedLine, "factors line " + std::to_string(line_no) + ": factor must be positive");
        }
        f[*id] = v;
    }
    return NormalizationFactors(std::move(f));
}

NormalizationFactors compute_factors(std::span<const ExpressionProfile> corpus, std::size_t n_genes) {
    if (corpus.empty()) {
        throw Error(ErrorKind::EmptyCorpus, "cannot compute normalization factors of an empty corpus");
    }
    std::vector<std::vector<double>> ratios(n_genes);
    for (const auto& cell : corpus) {
        std::uint64_t total = 0;
        for (const auto& [g, c] : cell.counts) {
            total += c;
        }
        if (total == 0) {
            continue;
        }
        for (const auto& [g, c] : cell.counts) {
            if (c > 0 && g < n_genes) {
                ratios[g].push_back(static_cast<double>(c) / static_cast<double>(total));
            }
        }
    }
    std::vector<double> factors(n_genes, 0.0);
    for (std::size_t g = 0; g < n_genes; ++g) {
        auto& r = ratios[g];
        if (r.empty()) {
            continue;
        }
        std::sort(r.begin(), r.end());
        const std::size_t mid = r.size() / 2;
        factors[g] = r.size() % 2 == 1 ? r[mid] : 0.5 * (r[mid - 1] + r[mid]);
    }
    return NormalizationFactors(std::move(factors));
}

TokenSequence encode_cell(const ExpressionProfile& profile, const GeneVocab& vocab, const NormalizationFactors& factors,
                          std::size_t context_length, EncodeStats* stats) {
    if (context_length < 2) {
        throw Error(ErrorKind::InvalidArgument, "context length must be at least 2");
    }
    std::uint64_t total = 0;
    for (const auto& [g, c] : profile.counts) {
        total += c;
    }

    std::vector<std::pair<double, TokenId>> ranked;
    ranked.reserve(profile.counts.size());
    for (const auto& [g, c] : profile.counts) {
        if (!vocab.is_gene(g)) {
            if (stats != nullptr) {
                ++stats->unknown_genes;
            }
            continue;
        }
        if (c == 0) {
            continue;
        }
        const double share = static_cast<double>(c) / static_cast<double>(total);
        ranked.emplace_back(share / factors.weight(g), g);
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });

    TokenSequence seq;
    seq.tokens.assign(context_length, vocab.pad());
    seq.tokens[0] = vocab.cls();
    const std::size_t n = std::min(ranked.size(), context_length - 1);
    for (std::size_t i = 0; i < n; ++i) {
        seq.tokens[i + 1] = ranked[i].second;
    }
    seq.true_length = n + 1;
    if (n == 0 && stats != nullptr) {
        ++stats->empty_profiles;
    }
    return seq;
}

MaskedSequence apply_masking(const TokenSequence& seq, const GeneVocab& vocab, double mask_ratio, std::uint64_t seed) {
    if (!(mask_ratio > 0.0 && mask_ratio <= 1.0)) {
        throw Error(ErrorKind::InvalidArgument, "mask ratio must lie in (0, 1]");
    }
    MaskedSequence out;
    out.tokens = seq.tokens;
    out.labels.assign(seq.tokens.size(), no_label);
    out.true_length = seq.true_length;

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<TokenId> random_gene(0, static_cast<TokenId>(vocab.n_genes() - 1));
    for (std::size_t pos = 1; pos < seq.true_length; ++pos) {
        if (!(unit(rng) < mask_ratio)) {
            continue;
        }
        out.selected.push_back(pos);
        out.labels[pos] = seq.tokens[pos];
        const double branch = unit(rng);
        if (branch < 0.8) {
            out.tokens[pos] = vocab.mask();
        } else if (branch < 0.9) {
            out.tokens[pos] = random_gene(rng);
        }
    }
    return out;
}

} // namespace cellokit::tokenizer
