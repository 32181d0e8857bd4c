#include "cellokit/error.hpp"
#include "cellokit/tokenizer.hpp"

#include <doctest.h>

#include <cmath>

using namespace cellokit;
using tokenizer::ExpressionProfile;
using tokenizer::GeneVocab;

namespace {

GeneVocab vocab_of(std::size_t n) {
    std::vector<std::string> genes;
    for (std::size_t g = 0; g < n; ++g) genes.push_back("g" + std::to_string(g + 1));
    return GeneVocab(genes);
}

ExpressionProfile cell(std::vector<std::pair<tokenizer::TokenId, std::uint64_t>> counts) {
    ExpressionProfile p;
    p.cell_id = "c";
    p.counts = std::move(counts);
    return p;
}

} // namespace

TEST_CASE("vocabulary layout") {
    const auto v = vocab_of(5);
    CHECK(v.size() == 8);
    CHECK(v.mask() == 5);
    CHECK(v.cls() == 6);
    CHECK(v.pad() == 7);
    CHECK(v.is_gene(4));
    CHECK_FALSE(v.is_gene(v.mask()));
    CHECK(v.find("g3") == tokenizer::TokenId{2});
    CHECK_FALSE(v.find("nope").has_value());
    CHECK(GeneVocab::parse(v.to_text()).genes() == v.genes());
    CHECK_THROWS_AS(GeneVocab({"a", "a"}), Error);
    CHECK_THROWS_AS(GeneVocab::parse("a\n\nb\n"), Error);
}

TEST_CASE("normalization factors") {
    SUBCASE("equal split") {
        const std::vector<ExpressionProfile> corpus{cell({{0, 10}, {1, 10}})};
        const auto f = tokenizer::compute_factors(corpus, 3);
        CHECK(f.find(0) == doctest::Approx(0.5));
        CHECK(f.find(1) == doctest::Approx(0.5));
        CHECK_FALSE(f.find(2).has_value());
        CHECK(f.weight(2) == 1.0);
    }
    SUBCASE("even-count median is the midpoint") {
        const std::vector<ExpressionProfile> corpus{cell({{0, 10}, {1, 10}}), cell({{0, 30}, {1, 10}})};
        const auto f = tokenizer::compute_factors(corpus, 2);
        CHECK(*f.find(0) == doctest::Approx(0.625).epsilon(1e-15));
        CHECK(*f.find(1) == doctest::Approx(0.375).epsilon(1e-15));
    }
    SUBCASE("zero counts are ignored and empty corpora rejected") {
        const std::vector<ExpressionProfile> corpus{cell({{0, 4}, {1, 0}})};
        const auto f = tokenizer::compute_factors(corpus, 2);
        CHECK_FALSE(f.contains(1));
        CHECK_THROWS_AS(tokenizer::compute_factors(std::vector<ExpressionProfile>{}, 2), Error);
    }
    SUBCASE("tsv round trip") {
        const auto v = vocab_of(3);
        const std::vector<ExpressionProfile> corpus{cell({{0, 3}, {2, 7}}), cell({{0, 1}, {2, 2}})};
        const auto f = tokenizer::compute_factors(corpus, 3);
        const auto back = tokenizer::NormalizationFactors::parse_tsv(f.to_tsv(v), v);
        CHECK(back.values() == f.values());
    }
}

TEST_CASE("rank value encoding") {
    const auto v = vocab_of(2);
    SUBCASE("hand computed order") {
        const tokenizer::NormalizationFactors f({2.0, 0.1});
        const auto seq = tokenizer::encode_cell(cell({{0, 10}, {1, 5}}), v, f, 4);
        CHECK(seq.tokens == std::vector<tokenizer::TokenId>{v.cls(), 1, 0, v.pad()});
        CHECK(seq.true_length == 3);
    }
    SUBCASE("all-zero profile is flagged, not an error") {
        tokenizer::EncodeStats stats;
        const auto seq = tokenizer::encode_cell(cell({{0, 0}}), v, tokenizer::NormalizationFactors({1.0, 1.0}), 4, &stats);
        CHECK(seq.tokens == std::vector<tokenizer::TokenId>{v.cls(), v.pad(), v.pad(), v.pad()});
        CHECK(seq.true_length == 1);
        CHECK(stats.empty_profiles == 1);
    }
    SUBCASE("ties go to the lower token id and unknown genes are counted") {
        tokenizer::EncodeStats stats;
        const auto seq = tokenizer::encode_cell(cell({{1, 5}, {0, 5}, {99, 3}}), v, {}, 5, &stats);
        CHECK(seq.tokens[1] == 0);
        CHECK(seq.tokens[2] == 1);
        CHECK(stats.unknown_genes == 1);
    }
    SUBCASE("truncation keeps the top ranked genes") {
        const auto big = vocab_of(3000);
        std::vector<std::pair<tokenizer::TokenId, std::uint64_t>> counts;
        for (tokenizer::TokenId g = 0; g < 3000; ++g) counts.emplace_back(g, 3000 - g);
        const auto seq = tokenizer::encode_cell(cell(counts), big, {}, 2048);
        CHECK(seq.true_length == 2048);
        CHECK(seq.tokens[1] == 0);
        CHECK(seq.tokens[2047] == 2046);
    }
    SUBCASE("scale invariance") {
        const auto big = vocab_of(20);
        std::vector<std::pair<tokenizer::TokenId, std::uint64_t>> counts, scaled;
        for (tokenizer::TokenId g = 0; g < 20; ++g) {
            counts.emplace_back(g, (g * 7) % 11 + 1);
            scaled.emplace_back(g, 3 * ((g * 7) % 11 + 1));
        }
        const tokenizer::NormalizationFactors f(std::vector<double>(20, 0.05));
        CHECK(tokenizer::encode_cell(cell(counts), big, f, 16).tokens == tokenizer::encode_cell(cell(scaled), big, f, 16).tokens);
    }
    CHECK_THROWS_AS(tokenizer::encode_cell(cell({}), v, {}, 1), Error);
}

TEST_CASE("masking") {
    const auto v = vocab_of(50);
    tokenizer::TokenSequence seq;
    seq.tokens = {v.cls(), 3, 4, 5, 6, 7, v.pad(), v.pad()};
    seq.true_length = 6;

    SUBCASE("CLS-only sequences select nothing") {
        tokenizer::TokenSequence only{{v.cls(), v.pad()}, 1};
        CHECK(tokenizer::apply_masking(only, v, 0.5, 1).selected.empty());
    }
    SUBCASE("labels exactly at selected positions; CLS and PAD never selected") {
        for (std::uint64_t s = 0; s < 200; ++s) {
            const auto m = tokenizer::apply_masking(seq, v, 0.5, s);
            for (std::size_t pos = 0; pos < m.tokens.size(); ++pos) {
                const bool sel = std::find(m.selected.begin(), m.selected.end(), pos) != m.selected.end();
                CHECK((m.labels[pos] != tokenizer::no_label) == sel);
                if (sel) {
                    CHECK(pos >= 1);
                    CHECK(pos < seq.true_length);
                    CHECK(m.labels[pos] == seq.tokens[pos]);
                    CHECK((m.tokens[pos] == v.mask() || v.is_gene(m.tokens[pos])));
                } else {
                    CHECK(m.tokens[pos] == seq.tokens[pos]);
                }
            }
        }
    }
    SUBCASE("ratio 1 selects every gene position; deterministic per seed") {
        std::size_t masked = 0, total = 0;
        for (std::uint64_t s = 0; s < 2000; ++s) {
            const auto m = tokenizer::apply_masking(seq, v, 1.0, s);
            CHECK(m.selected.size() == 5);
            for (auto pos : m.selected) masked += m.tokens[pos] == v.mask();
            total += m.selected.size();
        }
        const double frac = static_cast<double>(masked) / static_cast<double>(total);
        CHECK(std::abs(frac - 0.8) <= 3.0 * std::sqrt(0.16 / static_cast<double>(total)));
        CHECK(tokenizer::apply_masking(seq, v, 0.3, 9).tokens == tokenizer::apply_masking(seq, v, 0.3, 9).tokens);
    }
    CHECK_THROWS_AS(tokenizer::apply_masking(seq, v, 0.0, 1), Error);
}
