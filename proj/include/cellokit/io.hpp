#pragma once

#include "cellokit/autodiff.hpp"
#include "cellokit/tokenizer.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cellokit::io {

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over `path`.
void write_atomic(const std::filesystem::path& path, std::string_view bytes);

std::string sha256_hex(std::string_view bytes);

/// Splits on '\t' without collapsing empty fields.
std::vector<std::string> split_tabs(std::string_view line);

/// Identifiers written to TSV must not contain tabs or line breaks; throws Error(InvalidArgument).
void require_plain_id(std::string_view id, std::string_view what);

struct CellMetadata {
    std::string cell_id;
    std::string cell_type;
    std::string batch;
    std::string donor;
    std::string tissue;
};

/// Header "cell_id<TAB>cell_type<TAB>batch<TAB>donor<TAB>tissue", then one row per cell.
std::vector<CellMetadata> parse_metadata(std::string_view text);
std::string format_metadata(const std::vector<CellMetadata>& rows);

struct Corpus {
    std::vector<tokenizer::ExpressionProfile> profiles;
    std::size_t unknown_gene_entries = 0;
    std::vector<std::string> warnings;
};

/**
 * Joins "cell_id<TAB>gene_id<TAB>count" triples with metadata. Cells keep
 * the order of their first expression line; metadata-only cells (no
 * expressed gene) are appended in metadata order with empty profiles.
 * Entries for genes missing from the vocabulary are counted and dropped.
 *
 * Throws Error(MissingMetadata), Error(NegativeCount) with the line number,
 * Error(DuplicateCell) for repeated metadata rows or repeated
 * (cell, gene) triples, and Error(MalformedLine).
 */
Corpus parse_corpus(std::string_view expression_text, std::string_view metadata_text, const tokenizer::GeneVocab& vocab);
Corpus read_corpus(const std::filesystem::path& expression, const std::filesystem::path& metadata, const tokenizer::GeneVocab& vocab);

/// Triples for nonzero counts, cells in corpus order and genes in profile order.
std::string format_expression(const std::vector<tokenizer::ExpressionProfile>& profiles, const tokenizer::GeneVocab& vocab);
std::vector<CellMetadata> metadata_of(const std::vector<tokenizer::ExpressionProfile>& profiles);

/// "cell_id<TAB>v1<TAB>...<TAB>vD" with 17 significant digits.
std::string format_embeddings(const std::vector<std::string>& cell_ids, const ad::Matrix& embeddings);
std::pair<std::vector<std::string>, ad::Matrix> parse_embeddings(std::string_view text);

/// Flat "key<TAB>value" file written next to every command's outputs.
class Manifest {
public:
    void set(const std::string& key, const std::string& value) { entries_[key] = value; }
    void add_input(const std::string& label, const std::filesystem::path& path);
    std::string to_text() const;
    const std::map<std::string, std::string>& entries() const { return entries_; }

private:
    std::map<std::string, std::string> entries_;
};

inline constexpr std::string_view tool_version = "0.1.0";

} // namespace cellokit::io
