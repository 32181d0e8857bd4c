#include "cellokit/io.hpp"
#include "cellokit/error.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace cellokit::io {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::Io, "cannot open " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_atomic(const std::filesystem::path& path, std::string_view bytes) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error(ErrorKind::Io, "cannot write " + tmp.string());
        }
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            throw Error(ErrorKind::Io, "short write to " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error(ErrorKind::Io, "sha256 failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xF];
    }
    return out;
}

std::vector<std::string> split_tabs(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto tab = line.find('\t', start);
        if (tab == std::string_view::npos) {
            out.emplace_back(line.substr(start));
            return out;
        }
        out.emplace_back(line.substr(start, tab - start));
        start = tab + 1;
    }
}

void require_plain_id(std::string_view id, std::string_view what) {
    if (id.empty() || id.find_first_of("\t\r\n") != std::string_view::npos) {
        throw Error(ErrorKind::InvalidArgument, std::string(what) + " '" + std::string(id) + "' is empty or contains tab/newline");
    }
}

namespace {

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        std::string_view line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        ++line_no;
        fn(line, line_no);
        start = end + 1;
    }
}

} // namespace

std::vector<CellMetadata> parse_metadata(std::string_view text) {
    std::vector<CellMetadata> rows;
    bool header_seen = false;
    for_each_line(text, [&](std::string_view line, std::size_t line_no) {
        if (line.empty()) {
            return;
        }
        const auto f = split_tabs(line);
        if (!header_seen) {
            header_seen = true;
            if (f.size() != 5 || f[0] != "cell_id" || f[1] != "cell_type" || f[2] != "batch" || f[3] != "donor" || f[4] != "tissue") {
                throw Error(ErrorKind::MalformedLine, "metadata line 1: expected header cell_id/cell_type/batch/donor/tissue");
            }
            return;
        }
        if (f.size() != 5) {
            throw Error(ErrorKind::MalformedLine, "metadata line " + std::to_string(line_no) + ": expected 5 fields");
        }
        rows.push_back(CellMetadata{f[0], f[1], f[2], f[3], f[4]});
    });
    return rows;
}

std::string format_metadata(const std::vector<CellMetadata>& rows) {
    std::string out = "cell_id\tcell_type\tbatch\tdonor\ttissue\n";
    for (const auto& r : rows) {
        for (const auto* id : {&r.cell_id, &r.cell_type, &r.batch, &r.donor, &r.tissue}) {
            require_plain_id(*id, "metadata field");
        }
        out += r.cell_id + '\t' + r.cell_type + '\t' + r.batch + '\t' + r.donor + '\t' + r.tissue + '\n';
    }
    return out;
}

Corpus parse_corpus(std::string_view expression_text, std::string_view metadata_text, const tokenizer::GeneVocab& vocab) {
    const auto meta = parse_metadata(metadata_text);
    std::unordered_map<std::string, std::size_t> meta_index;
    for (std::size_t i = 0; i < meta.size(); ++i) {
        require_plain_id(meta[i].cell_id, "cell id");
        if (!meta_index.emplace(meta[i].cell_id, i).second) {
            throw Error(ErrorKind::DuplicateCell, "metadata lists cell " + meta[i].cell_id + " twice");
        }
    }

    Corpus corpus;
    std::unordered_map<std::string, std::size_t> profile_index;
    std::set<std::pair<std::size_t, tokenizer::TokenId>> seen_pairs;
    std::unordered_set<std::string> unknown_seen;
    for_each_line(expression_text, [&](std::string_view line, std::size_t line_no) {
        if (line.empty() || line.front() == '#') {
            return;
        }
        const auto f = split_tabs(line);
        if (f.size() != 3) {
            throw Error(ErrorKind::MalformedLine, "expression line " + std::to_string(line_no) + ": expected 3 fields");
        }
        const std::string& count_text = f[2];
        if (!count_text.empty() && count_text.front() == '-') {
            throw Error(ErrorKind::NegativeCount, "expression line " + std::to_string(line_no) + ": count " + count_text);
        }
        std::uint64_t count = 0;
        const auto [ptr, ec] = std::from_chars(count_text.data(), count_text.data() + count_text.size(), count);
        if (ec != std::errc() || ptr != count_text.data() + count_text.size()) {
            throw Error(ErrorKind::MalformedLine, "expression line " + std::to_string(line_no) + ": count '" + count_text + "'");
        }
        auto mit = meta_index.find(f[0]);
        if (mit == meta_index.end()) {
            throw Error(ErrorKind::MissingMetadata, f[0]);
        }
        auto [pit, inserted] = profile_index.emplace(f[0], corpus.profiles.size());
        if (inserted) {
            const auto& m = meta[mit->second];
            corpus.profiles.push_back(tokenizer::ExpressionProfile{m.cell_id, {}, m.cell_type, m.batch, m.donor, m.tissue});
        }
        const auto gene = vocab.find(f[1]);
        if (!gene) {
            ++corpus.unknown_gene_entries;
            unknown_seen.insert(f[1]);
            return;
        }
        if (!seen_pairs.emplace(pit->second, *gene).second) {
            throw Error(ErrorKind::DuplicateCell, "expression line " + std::to_string(line_no) + ": repeated (cell, gene) " + f[0] + "/" + f[1]);
        }
        corpus.profiles[pit->second].counts.emplace_back(*gene, count);
    });

    for (const auto& m : meta) {
        if (profile_index.count(m.cell_id) == 0) {
            profile_index.emplace(m.cell_id, corpus.profiles.size());
            corpus.profiles.push_back(tokenizer::ExpressionProfile{m.cell_id, {}, m.cell_type, m.batch, m.donor, m.tissue});
        }
    }
    if (corpus.profiles.empty()) {
        corpus.warnings.push_back("corpus is empty");
    }
    if (corpus.unknown_gene_entries > 0) {
        corpus.warnings.push_back(std::to_string(corpus.unknown_gene_entries) + " expression entries across " +
                                  std::to_string(unknown_seen.size()) + " genes are not in the vocabulary and were dropped");
    }
    return corpus;
}

Corpus read_corpus(const std::filesystem::path& expression, const std::filesystem::path& metadata, const tokenizer::GeneVocab& vocab) {
    return parse_corpus(read_file(expression), read_file(metadata), vocab);
}

std::string format_expression(const std::vector<tokenizer::ExpressionProfile>& profiles, const tokenizer::GeneVocab& vocab) {
    std::string out;
    for (const auto& p : profiles) {
        require_plain_id(p.cell_id, "cell id");
        for (const auto& [g, c] : p.counts) {
            if (c == 0) {
                continue;
            }
            out += p.cell_id;
            out += '\t';
            out += vocab.gene(g);
            out += '\t';
            out += std::to_string(c);
            out += '\n';
        }
    }
    return out;
}

std::vector<CellMetadata> metadata_of(const std::vector<tokenizer::ExpressionProfile>& profiles) {
    std::vector<CellMetadata> rows;
    rows.reserve(profiles.size());
    for (const auto& p : profiles) {
        rows.push_back(CellMetadata{p.cell_id, p.cell_type, p.batch, p.donor, p.tissue});
    }
    return rows;
}

std::string format_embeddings(const std::vector<std::string>& cell_ids, const ad::Matrix& embeddings) {
    if (cell_ids.size() != embeddings.rows) {
        throw Error(ErrorKind::SizeMismatch, "one cell id per embedding row required");
    }
    std::string out;
    char buf[64];
    for (std::size_t r = 0; r < embeddings.rows; ++r) {
        require_plain_id(cell_ids[r], "cell id");
        out += cell_ids[r];
        for (double v : embeddings.row(r)) {
            std::snprintf(buf, sizeof(buf), "\t%.17g", v);
            out += buf;
        }
        out += '\n';
    }
    return out;
}

std::pair<std::vector<std::string>, ad::Matrix> parse_embeddings(std::string_view text) {
    std::vector<std::string> ids;
    std::vector<double> values;
    std::size_t dim = 0;
    for_each_line(text, [&](std::string_view line, std::size_t line_no) {
        if (line.empty()) {
            return;
        }
        const auto f = split_tabs(line);
        if (f.size() < 2 || (dim != 0 && f.size() - 1 != dim)) {
            throw Error(ErrorKind::MalformedLine, "embedding line " + std::to_string(line_no));
        }
        dim = f.size() - 1;
        ids.push_back(f[0]);
        for (std::size_t i = 1; i < f.size(); ++i) {
            char* end = nullptr;
            const double v = std::strtod(f[i].c_str(), &end);
            if (end == f[i].c_str() || *end != '\0') {
                throw Error(ErrorKind::MalformedLine, "embedding line " + std::to_string(line_no) + ": bad number");
            }
            values.push_back(v);
        }
    });
    ad::Matrix m(ids.size(), dim);
    m.data = std::move(values);
    return {std::move(ids), std::move(m)};
}

void Manifest::add_input(const std::string& label, const std::filesystem::path& path) {
    entries_["input." + label + ".path"] = path.string();
    entries_["input." + label + ".sha256"] = sha256_hex(read_file(path));
}

std::string Manifest::to_text() const {
    std::string out;
    for (const auto& [k, v] : entries_) {
        out += k + '\t' + v + '\n';
    }
    return out;
}

} // namespace cellokit::io
